#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfac/frontend.hpp"
#include "sfac/model.hpp"

namespace sfac::trainer {

struct ManifestRow {
    std::string path;
    int label = 0;
    std::string recording_id;
};

// CSV with header `path,label,recording_id`. Duplicate paths and empty
// recording ids are rejected.
struct Manifest {
    std::vector<ManifestRow> rows;

    static Manifest load(const std::string& path);
    void save(const std::string& path) const;
    void validate() const;
};

// Partition of recording ids (never clips) into train/val/test at 7:1:2,
// deterministic for a given seed. Counts follow proportional rounding:
// n_test = round(0.2n), n_val = round(0.1n), rest train.
std::array<Manifest, 3> split_recordings(const Manifest& manifest, std::uint64_t seed);

struct TrainConfig {
    int batch_size = 48;
    double lr = 0.001;
    int max_epochs = 200;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    int patience = 0;             // early stop on val loss; 0 = off
    double stop_train_acc = 0.0;  // stop once train accuracy reaches this; 0 = off

    void validate() const;
};

// In-memory feature set: one (1,F,T) tensor per clip.
struct FeatureDataset {
    std::vector<Tensor> features;
    std::vector<int> labels;
    std::vector<std::string> recording_ids;

    std::size_t size() const { return features.size(); }
};

// Loads manifest rows into features: .sft1 rows are read directly, anything
// else is treated as a WAV recording (resampled, segmented, log-Mel). A WAV
// row contributes one entry per 3-s clip.
FeatureDataset load_features(const Manifest& manifest, const frontend::MelConfig& cfg = {});

// Adam with bias correction; state keyed by parameter name. Updates walk
// parameters in name order, so training is deterministic.
class AdamState {
public:
    void step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
              const TrainConfig& cfg);
    int steps_taken() const { return t_; }

private:
    std::map<std::string, Tensor> m_, v_;
    int t_ = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double val_macro_f1 = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = 0;  // 1-based epoch with the lowest validation loss
};

// Mini-batch training with the recipe defaults (Adam 0.001, batch 48).
// Mutates the model in place and leaves the lowest-val-loss checkpoint
// loaded. An empty validation set is allowed; the final epoch then wins.
TrainResult train(Model& model, const FeatureDataset& train_set, const FeatureDataset& val_set,
                  const TrainConfig& cfg);

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision, recall, f1;
    std::vector<std::vector<int>> confusion;  // confusion[truth][pred]
    int samples = 0;
};

// Clip-level argmax predictions. Class F1 is 0 when precision+recall is 0.
Metrics evaluate(const Model& model, const FeatureDataset& data);
Metrics metrics_from_confusion(const std::vector<std::vector<int>>& confusion);

void save_epoch_log_csv(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace sfac::trainer
