#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qarm/embedding.hpp"
#include "qarm/mat.hpp"

namespace qarm {

// Knobs for the synthetic world. Visual `style` drives the geometry of the
// base embeddings while behavioral `category` drives interactions; the gap
// between the two is the planted pathology the alignment stage must fix.
struct GenConfig {
  std::size_t n_items = 2000;
  std::size_t n_users = 400;
  std::size_t n_categories = 12;
  std::size_t n_styles = 12;
  std::size_t d_base = 48;

  double category_signal = 0.4;  // lambda on the category component
  double noise = 0.15;
  double pop_exponent = 1.2;  // power-law popularity
  std::size_t prefs_per_user = 2;

  // Interaction model.
  double in_pref_prob = 0.70;     // sample item from preferred categories
  double explore_uniform = 0.15;  // sample item uniformly (tail exposure)
  double ctr_base = 0.03;
  double ctr_gain = 0.35;
  double cvr_base = 0.02;
  double cvr_gain = 0.40;

  std::vector<std::string> tasks = {"ctr", "cvr"};

  void validate() const;  // throws std::invalid_argument
};

struct Item {
  std::string item_id;
  int category = 0;
  int style = 0;
  std::vector<double> base_embedding;
  double popularity = 1.0;
};

struct User {
  std::string user_id;
  std::vector<double> category_affinity;  // one weight per category, in [0,1]
};

struct World {
  std::vector<Item> items;
  std::vector<User> users;
  std::size_t categories = 0;
  GenConfig config;
  std::uint64_t seed = 0;

  // Planted components, kept so tests can decompose base embeddings.
  Mat style_protos;      // n_styles x d_base
  Mat category_signals;  // n_categories x d_base

  EmbeddingMatrix base_embeddings() const;
};

struct LogRow {
  std::string user_id;
  std::string item_id;
  std::int64_t ts = 0;
  int ctr = 0;
  int cvr = 0;
};

struct InteractionLog {
  std::vector<LogRow> rows;
};

World generate_world(const GenConfig& config, std::uint64_t seed);

// Draws n_events impressions. ctr positives follow user-category affinity;
// cvr positives are a subset of ctr positives (funnel semantics).
InteractionLog emit_log(const World& world, std::size_t n_events,
                        std::uint64_t seed);

// TSV with header "user_id\titem_id\tts\tctr\tcvr".
void save_log(const std::filesystem::path& path, const InteractionLog& log);
InteractionLog load_log(const std::filesystem::path& path);

// Plain key=value dump of config + seed.
void save_world_manifest(const std::filesystem::path& path, const World& w);

// item_id, category, style, popularity per catalog item (evaluation needs
// the category/style tags for sliced reports and projections).
void save_items_tsv(const std::filesystem::path& path, const World& w);
struct ItemTags {
  std::string item_id;
  int category = 0;
  int style = 0;
  double popularity = 1.0;
};
std::vector<ItemTags> load_items_tsv(const std::filesystem::path& path);

}  // namespace qarm
