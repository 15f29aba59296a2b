#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vfd/datagen/datagen.hpp"
#include "vfd/numerics/rng.hpp"
#include "vfd/numerics/tensor.hpp"

namespace vfd::pipeline {

using datagen::Split;

struct SampleRecord {
  std::filesystem::path audio;  // resolved against the manifest directory
  std::filesystem::path image;
  std::optional<std::string> identity;  // required for real records
  bool real = true;
  Split split = Split::kTrain;
};

// One JSON object per line with keys audio, image, identity, label, split.
// Relative paths resolve against the manifest's directory.
std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);

// Encoder-ready inputs for one record.
struct SampleInputs {
  num::Tensor spectrogram;  // [1 x 512 x 300]
  num::Tensor face;         // [3 x 224 x 224], normalized
};

SampleInputs load_inputs(const SampleRecord& record);

// Records plus a lazy cache of decoded inputs. Decoding is deterministic,
// so cache order never changes results.
class Dataset {
 public:
  explicit Dataset(std::vector<SampleRecord> records);
  static Dataset from_manifest(const std::filesystem::path& path);

  const std::vector<SampleRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const SampleInputs& inputs(std::size_t index) const;

  // Indices of records in `split` (with the given label when set).
  std::vector<std::size_t> select(Split split, std::optional<bool> real = std::nullopt) const;

 private:
  std::vector<SampleRecord> records_;
  mutable std::vector<std::optional<SampleInputs>> cache_;
};

// Real training records grouped by identity; class indices follow sorted
// identity names.
struct IdentityIndex {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> records;  // per class

  std::size_t num_classes() const { return names.size(); }
  static IdentityIndex build(const Dataset& data, const std::vector<std::size_t>& record_ids);
};

struct PretrainItem {
  std::size_t anchor_record = 0;  // voice source
  std::size_t identity = 0;       // class index of the anchor
  std::vector<std::size_t> negative_identities;
};

// Each identity touched by the batch gets one face record for the step; an
// anchor's positive is its own identity's face and every negative is the
// face of a distinct other identity.
struct PretrainBatch {
  std::vector<PretrainItem> items;
  std::map<std::size_t, std::size_t> face_record;  // class -> record

  std::size_t positive_face(const PretrainItem& item) const { return face_record.at(item.identity); }
};

// Anchors cycle through a seeded permutation of the identities, so a batch
// repeats an identity only when batch_size exceeds the class count.
PretrainBatch sample_pretrain_batch(const IdentityIndex& identities, std::size_t batch_size,
                                    std::size_t negatives, num::Rng& rng);

// `reals` real pairs sharing `negatives` fake pairs drawn without
// replacement. Every real is scored against the same fakes with the real
// similarity in slot 0.
struct FinetuneBatch {
  std::vector<std::size_t> real_records;
  std::vector<std::size_t> fake_records;
};

FinetuneBatch sample_finetune_batch(const std::vector<std::size_t>& reals,
                                    const std::vector<std::size_t>& fakes, std::size_t batch_size,
                                    std::size_t negatives, num::Rng& rng);

// Seeded subset keeping round(fraction * n) entries (at least one), in
// original order.
std::vector<std::size_t> subsample(const std::vector<std::size_t>& ids, double fraction,
                                   num::Rng& rng);

}  // namespace vfd::pipeline
