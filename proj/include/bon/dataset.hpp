#pragma once

// Ingestion of the four prompt datasets and generation of synthetic prompt
// sets. Dataset files are JSON lines under a data directory keyed by dataset
// id; token indices ship inside the files so no tokenizer is needed anywhere
// and losses are reproducible bit-for-bit. A manifest records the prompt
// count of every file for integrity checking.

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bon/domain.hpp"
#include "bon/errors.hpp"
#include "bon/serialize.hpp"

namespace bon {

/// Fixed sizes of the four benchmark datasets.
inline std::optional<int> expected_prompt_count(DatasetId id) {
  switch (id) {
    case DatasetId::animal_animal: return 66;
    case DatasetId::animal_object: return 144;
    case DatasetId::object_object: return 66;
    case DatasetId::similar_subjects: return 31;
    case DatasetId::synthetic: return std::nullopt;
  }
  return std::nullopt;
}

inline std::filesystem::path dataset_file(DatasetId id, const std::filesystem::path& data_dir) {
  return data_dir / (std::string(to_string(id)) + ".jsonl");
}

/// Declared prompt counts from the data directory's manifest.
inline nlohmann::json load_manifest(const std::filesystem::path& data_dir) {
  const auto path = data_dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IngestionError("dataset manifest not found: " + path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("dataset manifest unparseable: " + std::string(e.what()));
  }
  return manifest;
}

/// Load and validate one dataset. Every prompt invariant is enforced and the
/// parsed count must match both the manifest and, for the four benchmark
/// sets, their fixed sizes.
inline std::vector<PromptSpec> load_dataset(DatasetId id, const std::filesystem::path& data_dir) {
  const auto path = dataset_file(id, data_dir);
  std::ifstream in(path);
  if (!in) throw IngestionError("dataset file not found: " + path.string());

  std::vector<PromptSpec> prompts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    PromptSpec p = prompt_from_json(j, id);
    p.validate();
    prompts.push_back(std::move(p));
  }

  const auto manifest = load_manifest(data_dir);
  const std::string name(to_string(id));
  if (!manifest.contains(name))
    throw IngestionError("dataset manifest has no entry for " + name);
  const int declared = manifest.at(name).get<int>();
  if (const auto fixed = expected_prompt_count(id); fixed && declared != *fixed)
    throw DatasetIntegrityError(name + ": manifest declares " + std::to_string(declared) +
                                " prompts, expected " + std::to_string(*fixed));
  if (static_cast<int>(prompts.size()) != declared)
    throw DatasetIntegrityError(name + ": file has " + std::to_string(prompts.size()) +
                                " prompts, manifest declares " + std::to_string(declared));
  return prompts;
}

/// Deterministic synthetic prompt set: two attributed subjects per prompt,
/// distinct word combinations per index. Suited to every scorer (each group
/// has a noun and an attribute, so contrastive anchors always have a
/// positive pair).
inline std::vector<PromptSpec> synthetic_prompts(int count) {
  if (count <= 0) throw ValidationError("synthetic_prompts: count must be positive");
  static constexpr std::array<const char*, 24> kNouns = {
      "lantern", "kettle",  "anchor", "violin", "cactus",  "helmet", "mirror", "barrel",
      "whistle", "ladder",  "basket", "candle", "hammock", "teapot", "globe",  "drum",
      "feather", "bottle",  "sundial", "plough", "beacon",  "easel",  "quill",  "compass"};
  static constexpr std::array<const char*, 12> kColors = {
      "red",  "blue",  "green", "yellow", "purple", "orange",
      "pink", "brown", "black", "white",  "silver", "golden"};
  std::vector<PromptSpec> prompts;
  prompts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    int rest = i;
    const int noun_a = rest % static_cast<int>(kNouns.size());
    rest /= static_cast<int>(kNouns.size());
    const int noun_b = (noun_a + 1 + rest % (static_cast<int>(kNouns.size()) - 1)) % static_cast<int>(kNouns.size());
    rest /= static_cast<int>(kNouns.size()) - 1;
    const int color_a = rest % static_cast<int>(kColors.size());
    rest /= static_cast<int>(kColors.size());
    const int color_b = rest % static_cast<int>(kColors.size());
    PromptSpec p;
    p.dataset_id = DatasetId::synthetic;
    p.text = std::string("a ") + kColors[static_cast<std::size_t>(color_a)] + " " + kNouns[static_cast<std::size_t>(noun_a)] +
             " and a " + kColors[static_cast<std::size_t>(color_b)] + " " + kNouns[static_cast<std::size_t>(noun_b)];
    // a(0) color(1) noun(2) and(3) a(4) color(5) noun(6)
    p.subjects = {{{2}, {1}}, {{6}, {5}}};
    p.validate();
    prompts.push_back(std::move(p));
  }
  return prompts;
}

}  // namespace bon
