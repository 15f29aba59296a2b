#include "vfd/pipeline/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

#include "vfd/errors.hpp"
#include "vfd/frontends/audio.hpp"
#include "vfd/frontends/image.hpp"

namespace vfd::pipeline {
namespace {

std::string field_string(const nlohmann::json& line, const char* key, std::size_t line_no) {
  if (!line.contains(key) || !line[key].is_string()) {
    throw DataError("manifest line " + std::to_string(line_no) + ": missing string field '" +
                    key + "'");
  }
  return line[key].get<std::string>();
}

// First `count` entries of a partial Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> draw_distinct(std::vector<std::size_t> pool, std::size_t count,
                                       num::Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

std::vector<SampleRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<SampleRecord> out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json line;
    try {
      line = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    SampleRecord rec;
    rec.audio = base / field_string(line, "audio", line_no);
    rec.image = base / field_string(line, "image", line_no);
    const std::string label = field_string(line, "label", line_no);
    if (label != "real" && label != "fake") {
      throw DataError("manifest line " + std::to_string(line_no) + ": label must be real or fake");
    }
    rec.real = label == "real";
    rec.split = datagen::parse_split(field_string(line, "split", line_no));
    if (line.contains("identity") && !line["identity"].is_null()) {
      const auto& id = line["identity"];
      rec.identity = id.is_string() ? id.get<std::string>() : id.dump();
    }
    if (rec.real && !rec.identity) {
      throw DataError("manifest line " + std::to_string(line_no) + ": real record needs an identity");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

SampleInputs load_inputs(const SampleRecord& record) {
  SampleInputs in;
  in.spectrogram =
      frontends::spectrogram(frontends::standardize_clip(frontends::read_wav(record.audio))).bins;
  in.face = frontends::load_face(record.image).pixels;
  return in;
}

Dataset::Dataset(std::vector<SampleRecord> records)
    : records_(std::move(records)), cache_(records_.size()) {}

Dataset Dataset::from_manifest(const std::filesystem::path& path) {
  return Dataset(read_manifest(path));
}

const SampleInputs& Dataset::inputs(std::size_t index) const {
  if (index >= records_.size()) throw ContractError("record index out of range");
  if (!cache_[index]) cache_[index] = load_inputs(records_[index]);
  return *cache_[index];
}

std::vector<std::size_t> Dataset::select(Split split, std::optional<bool> real) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].split != split) continue;
    if (real && records_[i].real != *real) continue;
    out.push_back(i);
  }
  return out;
}

IdentityIndex IdentityIndex::build(const Dataset& data, const std::vector<std::size_t>& record_ids) {
  std::set<std::string> names;
  for (std::size_t i : record_ids) {
    const SampleRecord& r = data.records().at(i);
    if (r.real && r.identity) names.insert(*r.identity);
  }
  IdentityIndex index;
  index.names.assign(names.begin(), names.end());
  index.records.resize(index.names.size());
  for (std::size_t i : record_ids) {
    const SampleRecord& r = data.records()[i];
    if (!r.real || !r.identity) continue;
    const auto pos = std::lower_bound(index.names.begin(), index.names.end(), *r.identity);
    index.records[static_cast<std::size_t>(pos - index.names.begin())].push_back(i);
  }
  return index;
}

PretrainBatch sample_pretrain_batch(const IdentityIndex& identities, std::size_t batch_size,
                                    std::size_t negatives, num::Rng& rng) {
  const std::size_t classes = identities.num_classes();
  if (negatives < 1) throw ConfigError("pretraining needs at least one negative (U >= 1)");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (classes < negatives + 1) {
    throw DataError("pretraining with U=" + std::to_string(negatives) + " needs " +
                    std::to_string(negatives + 1) + " identities, train split has " +
                    std::to_string(classes));
  }
  PretrainBatch batch;
  std::vector<std::size_t> order(classes);
  auto face_for = [&](std::size_t cls) {
    if (!batch.face_record.contains(cls)) {
      const auto& recs = identities.records[cls];
      batch.face_record[cls] = recs[rng.below(recs.size())];
    }
  };
  for (std::size_t b = 0; b < batch_size; ++b) {
    if (b % classes == 0) {
      std::iota(order.begin(), order.end(), 0);
      order = draw_distinct(order, classes, rng);
    }
    PretrainItem item;
    item.identity = order[b % classes];
    const auto& recs = identities.records[item.identity];
    item.anchor_record = recs[rng.below(recs.size())];
    std::vector<std::size_t> others;
    others.reserve(classes - 1);
    for (std::size_t c = 0; c < classes; ++c) {
      if (c != item.identity) others.push_back(c);
    }
    item.negative_identities = draw_distinct(std::move(others), negatives, rng);
    face_for(item.identity);
    for (std::size_t c : item.negative_identities) face_for(c);
    batch.items.push_back(std::move(item));
  }
  return batch;
}

FinetuneBatch sample_finetune_batch(const std::vector<std::size_t>& reals,
                                    const std::vector<std::size_t>& fakes, std::size_t batch_size,
                                    std::size_t negatives, num::Rng& rng) {
  if (negatives < 1) throw ConfigError("fine-tuning needs at least one fake pair (Q >= 1)");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (reals.empty()) throw DataError("fine-tuning split has no real records");
  if (fakes.size() < negatives) {
    throw DataError("fine-tuning with Q=" + std::to_string(negatives) + " needs " +
                    std::to_string(negatives) + " fake records, split has " +
                    std::to_string(fakes.size()));
  }
  FinetuneBatch batch;
  for (std::size_t b = 0; b < batch_size; ++b) batch.real_records.push_back(reals[rng.below(reals.size())]);
  batch.fake_records = draw_distinct(fakes, negatives, rng);
  return batch;
}

std::vector<std::size_t> subsample(const std::vector<std::size_t>& ids, double fraction,
                                   num::Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
  if (ids.empty()) return ids;
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size()))), 1,
      ids.size());
  std::vector<std::size_t> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  positions = draw_distinct(positions, keep, rng);
  std::sort(positions.begin(), positions.end());
  std::vector<std::size_t> out;
  out.reserve(keep);
  for (std::size_t p : positions) out.push_back(ids[p]);
  return out;
}

}  // namespace vfd::pipeline
