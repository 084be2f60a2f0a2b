#include "sfac/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "sfac/tensor_io.hpp"

namespace sfac::trainer {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

// Stack (1,F,T) features into an (N,1,F,T) batch.
Tensor stack_features(const FeatureDataset& data, const std::vector<std::size_t>& idx) {
    const Tensor& first = data.features[idx[0]];
    const int f = first.dim(1), t = first.dim(2);
    Tensor batch({static_cast<int>(idx.size()), 1, f, t});
    const std::size_t per = first.numel();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor& src = data.features[idx[i]];
        if (src.shape() != first.shape()) {
            throw ShapeError("feature shape mismatch within a batch: " + src.shape_str() +
                             " vs " + first.shape_str());
        }
        std::copy(src.data(), src.data() + per, batch.data() + i * per);
    }
    return batch;
}

}  // namespace

void Manifest::validate() const {
    std::set<std::string> seen;
    for (const auto& row : rows) {
        if (row.path.empty()) throw ValueError("manifest: empty path");
        if (row.label < 0) throw ValueError("manifest: negative label for " + row.path);
        if (row.recording_id.empty()) {
            throw ValueError("manifest: empty recording_id for " + row.path);
        }
        if (!seen.insert(row.path).second) {
            throw ValueError("manifest: duplicate path " + row.path);
        }
    }
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("manifest: cannot open " + path);
    Manifest m;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (header) {
            if (fields.size() != 3 || fields[0] != "path" || fields[1] != "label" ||
                fields[2] != "recording_id") {
                throw FormatError("manifest: expected header `path,label,recording_id` in " + path);
            }
            header = false;
            continue;
        }
        if (fields.size() != 3) {
            throw FormatError("manifest: line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields in " + path);
        }
        ManifestRow row;
        row.path = fields[0];
        try {
            row.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw FormatError("manifest: bad label \"" + fields[1] + "\" at line " +
                              std::to_string(line_no) + " in " + path);
        }
        row.recording_id = fields[2];
        m.rows.push_back(std::move(row));
    }
    if (header) throw FormatError("manifest: empty file " + path);
    m.validate();
    return m;
}

void Manifest::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw FormatError("manifest: cannot open for writing " + path);
    os << "path,label,recording_id\n";
    for (const auto& row : rows) {
        os << row.path << "," << row.label << "," << row.recording_id << "\n";
    }
    if (!os) throw FormatError("manifest: write failed " + path);
}

std::array<Manifest, 3> split_recordings(const Manifest& manifest, std::uint64_t seed) {
    if (manifest.rows.empty()) throw ValueError("split: empty manifest");
    manifest.validate();

    // recording ids in first-appearance order, then a seeded shuffle
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& row : manifest.rows) {
        if (seen.insert(row.recording_id).second) ids.push_back(row.recording_id);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    const std::size_t n = ids.size();
    const std::size_t n_test = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(n)));
    const std::size_t n_train = n - n_test - n_val;

    std::map<std::string, int> assignment;  // 0 train, 1 val, 2 test
    for (std::size_t i = 0; i < n; ++i) {
        assignment[ids[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    }
    std::array<Manifest, 3> out;
    for (const auto& row : manifest.rows) out[static_cast<std::size_t>(assignment[row.recording_id])].rows.push_back(row);
    return out;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValueError("train: batch size must be >= 1");
    if (!(lr > 0.0)) throw ValueError("train: learning rate must be > 0 (use max_epochs=0 to skip)");
    if (max_epochs < 0) throw ValueError("train: max_epochs must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValueError("train: betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw ValueError("train: eps must be > 0");
}

FeatureDataset load_features(const Manifest& manifest, const frontend::MelConfig& cfg) {
    manifest.validate();
    FeatureDataset out;
    frontend::MelExtractor extractor(cfg);
    for (const auto& row : manifest.rows) {
        if (ends_with(row.path, ".sft1")) {
            Tensor t = read_sft1(row.path);
            if (t.rank() != 3) {
                throw FormatError("feature file " + row.path + " has shape " + t.shape_str() +
                                  ", expected rank 3");
            }
            out.features.push_back(std::move(t));
            out.labels.push_back(row.label);
            out.recording_ids.push_back(row.recording_id);
        } else {
            frontend::WavData wav = frontend::read_wav(row.path);
            auto samples = frontend::resample_to_16k(wav.samples, wav.sample_rate);
            for (const auto& clip : frontend::segment(samples, row.recording_id, cfg)) {
                out.features.push_back(extractor.log_mel(clip));
                out.labels.push_back(row.label);
                out.recording_ids.push_back(row.recording_id);
            }
        }
    }
    return out;
}

void AdamState::step(std::map<std::string, Tensor>& params,
                     const std::map<std::string, Tensor>& grads, const TrainConfig& cfg) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t_);
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            throw ValueError("adam: no gradient for parameter " + name);
        }
        const Tensor& g = git->second;
        if (!g.same_shape(p)) {
            throw ShapeError("adam: gradient shape " + g.shape_str() + " != parameter shape " +
                             p.shape_str() + " for " + name);
        }
        Tensor& m = m_.try_emplace(name, Tensor(p.shape())).first->second;
        Tensor& v = v_.try_emplace(name, Tensor(p.shape())).first->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

namespace {

struct EvalOutcome {
    double loss = 0.0;
    Metrics metrics;
};

EvalOutcome evaluate_with_loss(const Model& model, const FeatureDataset& data, int n_classes,
                               int batch_size) {
    EvalOutcome out;
    std::vector<std::vector<int>> confusion(static_cast<std::size_t>(n_classes),
                                            std::vector<int>(static_cast<std::size_t>(n_classes), 0));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
            idx.push_back(i);
        }
        Tensor batch = stack_features(data, idx);
        Tensor logits = model.forward(batch);
        std::vector<int> labels;
        for (std::size_t i : idx) labels.push_back(data.labels[i]);
        loss_sum += ops::cross_entropy(logits, labels) * static_cast<double>(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            int best = 0;
            for (int c = 1; c < n_classes; ++c) {
                if (logits.at(static_cast<int>(i), c) > logits.at(static_cast<int>(i), best)) {
                    best = c;
                }
            }
            confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(best)]++;
        }
    }
    out.loss = data.size() ? loss_sum / static_cast<double>(data.size()) : 0.0;
    out.metrics = metrics_from_confusion(confusion);
    return out;
}

}  // namespace

TrainResult train(Model& model, const FeatureDataset& train_set, const FeatureDataset& val_set,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0) throw ValueError("train: empty training set");
    const int n_classes = model.config().n_classes;
    for (int label : train_set.labels) {
        if (label < 0 || label >= n_classes) {
            throw ValueError("train: label " + std::to_string(label) + " out of range for " +
                             std::to_string(n_classes) + " classes");
        }
    }

    TrainResult result;
    AdamState adam;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double best_val_loss = std::numeric_limits<double>::infinity();
    std::map<std::string, Tensor> best_params = model.parameters();
    std::map<std::string, Tensor> best_buffers = model.buffers();
    int epochs_since_best = 0;

    model.set_training(true);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<std::size_t> idx(
                order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() + static_cast<std::ptrdiff_t>(
                                    std::min(order.size(), start + cfg.batch_size)));
            Tensor batch = stack_features(train_set, idx);
            std::vector<int> labels;
            for (std::size_t i : idx) labels.push_back(train_set.labels[i]);

            autograd::Tape tape;
            ops::Context ctx{&tape, nullptr};
            ops::Value logits = model.forward(ctx, tape.leaf(std::move(batch)), true);
            ops::Value loss = ops::cross_entropy(ctx, logits, labels);
            loss_sum += loss.tensor()[0] * static_cast<double>(idx.size());
            tape.backward(loss);

            // every trainable parameter gets a gradient; untouched ones zero
            std::map<std::string, Tensor> grads = tape.gradients();
            for (const auto& [name, p] : model.parameters()) {
                grads.try_emplace(name, Tensor(p.shape()));
            }
            adam.step(model.mutable_parameters(), grads, cfg);
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(train_set.size());

        model.set_training(false);
        if (val_set.size() > 0) {
            EvalOutcome val = evaluate_with_loss(model, val_set, n_classes, cfg.batch_size);
            log.val_loss = val.loss;
            log.val_acc = val.metrics.accuracy;
            log.val_macro_f1 = val.metrics.macro_f1;
            if (val.loss < best_val_loss) {
                best_val_loss = val.loss;
                best_params = model.parameters();
                best_buffers = model.buffers();
                result.best_epoch = epoch;
                epochs_since_best = 0;
            } else {
                ++epochs_since_best;
            }
        } else {
            best_params = model.parameters();
            best_buffers = model.buffers();
            result.best_epoch = epoch;
        }
        result.log.push_back(log);

        bool stop = false;
        if (cfg.stop_train_acc > 0.0) {
            EvalOutcome tr = evaluate_with_loss(model, train_set, n_classes, cfg.batch_size);
            if (tr.metrics.accuracy >= cfg.stop_train_acc) stop = true;
        }
        if (cfg.patience > 0 && epochs_since_best >= cfg.patience) stop = true;
        model.set_training(true);
        if (stop) break;
    }
    model.set_training(false);
    model.mutable_parameters() = std::move(best_params);
    model.mutable_buffers() = std::move(best_buffers);
    return result;
}

Metrics metrics_from_confusion(const std::vector<std::vector<int>>& confusion) {
    const std::size_t c = confusion.size();
    Metrics m;
    m.confusion = confusion;
    m.precision.assign(c, 0.0);
    m.recall.assign(c, 0.0);
    m.f1.assign(c, 0.0);
    int total = 0, correct = 0;
    for (std::size_t i = 0; i < c; ++i) {
        if (confusion[i].size() != c) throw ShapeError("metrics: confusion matrix must be square");
        for (std::size_t j = 0; j < c; ++j) total += confusion[i][j];
        correct += confusion[i][i];
    }
    m.samples = total;
    m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
    double f1_sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        int tp = confusion[k][k];
        int pred = 0, truth = 0;
        for (std::size_t i = 0; i < c; ++i) {
            pred += confusion[i][k];
            truth += confusion[k][i];
        }
        m.precision[k] = pred > 0 ? static_cast<double>(tp) / pred : 0.0;
        m.recall[k] = truth > 0 ? static_cast<double>(tp) / truth : 0.0;
        const double pr = m.precision[k] + m.recall[k];
        m.f1[k] = pr > 0.0 ? 2.0 * m.precision[k] * m.recall[k] / pr : 0.0;
        f1_sum += m.f1[k];
    }
    m.macro_f1 = c > 0 ? f1_sum / static_cast<double>(c) : 0.0;
    return m;
}

Metrics evaluate(const Model& model, const FeatureDataset& data) {
    return evaluate_with_loss(model, data, model.config().n_classes, 64).metrics;
}

void save_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
    std::ofstream os(path);
    if (!os) throw FormatError("epoch log: cannot open for writing " + path);
    os << "epoch,train_loss,val_loss,val_acc,val_macro_f1\n";
    os.precision(17);
    for (const auto& e : log) {
        os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.val_acc << ","
           << e.val_macro_f1 << "\n";
    }
    if (!os) throw FormatError("epoch log: write failed " + path);
}

}  // namespace sfac::trainer
