#include <doctest.h>

#include <filesystem>
#include <map>

#include "qarm/pairs.hpp"
#include "qarm/synth.hpp"

using namespace qarm;

namespace {

InteractionLog make_log(
    const std::vector<std::tuple<std::string, std::string, int>>& events) {
  InteractionLog log;
  std::int64_t ts = 0;
  for (const auto& [u, i, ctr] : events)
    log.rows.push_back(LogRow{u, i, ts++, ctr, 0});
  return log;
}

IdEmbeddingModel hand_model(
    const std::vector<std::pair<std::string, std::vector<double>>>& items) {
  IdEmbeddingModel m;
  m.item_embeddings.data = Mat(items.size(), items[0].second.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    m.item_embeddings.ids.push_back(items[i].first);
    std::copy(items[i].second.begin(), items[i].second.end(),
              m.item_embeddings.data.row(i).begin());
  }
  m.user_embeddings.data = Mat(1, items[0].second.size(), 0.1);
  m.user_embeddings.ids = {"u0"};
  return m;
}

}  // namespace

TEST_CASE("mf: dedicated user ranks their only item first") {
  std::vector<std::tuple<std::string, std::string, int>> events;
  for (int r = 0; r < 30; ++r) events.emplace_back("u0", "i0", 1);
  // Other users spread over other items so negatives exist.
  for (int r = 0; r < 20; ++r) {
    events.emplace_back("u1", "i" + std::to_string(1 + r % 4), 1);
    events.emplace_back("u2", "i" + std::to_string(1 + (r + 2) % 4), 1);
  }
  const InteractionLog log = make_log(events);
  const IdEmbeddingModel m = train_id_embeddings(log, MfConfig{8, 8, 0.1, 4}, 3);

  double best = -1e30;
  std::string best_item;
  for (const auto& id : m.item_embeddings.ids) {
    const double s = mf_score(m, "u0", id);
    if (s > best) {
      best = s;
      best_item = id;
    }
  }
  CHECK(best_item == "i0");
  REQUIRE(m.loss_curve.size() == 8);
  CHECK(m.loss_curve.back() < m.loss_curve.front());
}

TEST_CASE("mf: zero epochs returns the random initialization") {
  const InteractionLog log = make_log({{"u0", "i0", 1}, {"u1", "i1", 1}});
  const IdEmbeddingModel init = make_initial_model(log, 8, 42);
  const IdEmbeddingModel trained =
      train_id_embeddings(log, MfConfig{8, 0, 0.1, 2}, 42);
  CHECK(trained.item_embeddings.data == init.item_embeddings.data);
  CHECK(trained.user_embeddings.data == init.user_embeddings.data);
  CHECK(trained.loss_curve.empty());
}

TEST_CASE("mf: identical seeds give identical loss curves") {
  std::vector<std::tuple<std::string, std::string, int>> events;
  for (int r = 0; r < 50; ++r)
    events.emplace_back("u" + std::to_string(r % 5),
                        "i" + std::to_string(r % 7), r % 2);
  const InteractionLog log = make_log(events);
  const auto a = train_id_embeddings(log, MfConfig{6, 4, 0.05, 3}, 9);
  const auto b = train_id_embeddings(log, MfConfig{6, 4, 0.05, 3}, 9);
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.item_embeddings.data == b.item_embeddings.data);

  CHECK_THROWS_AS(train_id_embeddings(InteractionLog{}, MfConfig{}, 1),
                  std::invalid_argument);
}

TEST_CASE("u2i: single-item history emits that pair") {
  const InteractionLog log = make_log({{"u0", "a", 1}, {"u0", "b", 1}});
  const IdEmbeddingModel m = hand_model({{"a", {1, 0}}, {"b", {0.9, 0.1}}});
  const PairDataset ds = mine_u2i_pairs(log, m);
  REQUIRE(ds.pairs.size() == 1);
  CHECK(ds.pairs[0].trigger == "a");
  CHECK(ds.pairs[0].target == "b");
  CHECK(ds.pairs[0].source == PairSource::U2i);
}

TEST_CASE("u2i: empty history emits nothing") {
  const InteractionLog log = make_log({{"u0", "a", 1}});
  const IdEmbeddingModel m = hand_model({{"a", {1, 0}}});
  CHECK(mine_u2i_pairs(log, m).pairs.empty());
}

TEST_CASE("u2i: trigger is the cosine argmax over the history") {
  // cos(x,t)=0.9, cos(y,t)=0.2, cos(z,t)=0.5 by construction in 2-d.
  const auto vec = [](double c) {
    return std::vector<double>{c, std::sqrt(1.0 - c * c)};
  };
  const IdEmbeddingModel m = hand_model(
      {{"t", {1, 0}}, {"x", vec(0.9)}, {"y", vec(0.2)}, {"z", vec(0.5)}});
  const InteractionLog log = make_log(
      {{"u0", "x", 1}, {"u0", "y", 1}, {"u0", "z", 1}, {"u0", "t", 1}});
  const PairDataset ds = mine_u2i_pairs(log, m);
  bool found = false;
  for (const auto& p : ds.pairs)
    if (p.target == "t") {
      CHECK(p.trigger == "x");
      CHECK(p.score == doctest::Approx(0.9));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("u2i: non-positive events neither mine nor extend history") {
  const InteractionLog log =
      make_log({{"u0", "a", 1}, {"u0", "b", 0}, {"u0", "c", 1}});
  const IdEmbeddingModel m =
      hand_model({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {0.5, 0.5}}});
  const PairDataset ds = mine_u2i_pairs(log, m);
  REQUIRE(ds.pairs.size() == 1);
  CHECK(ds.pairs[0].trigger == "a");
  CHECK(ds.pairs[0].target == "c");
}

TEST_CASE("u2i: window bounds the scanned history") {
  // With window=1 only the immediately preceding positive is a candidate.
  const IdEmbeddingModel m =
      hand_model({{"a", {1, 0}}, {"b", {0, 1}}, {"t", {0.99, 0.14}}});
  const InteractionLog log =
      make_log({{"u0", "a", 1}, {"u0", "b", 1}, {"u0", "t", 1}});
  const PairDataset ds = mine_u2i_pairs(log, m, 1);
  for (const auto& p : ds.pairs)
    if (p.target == "t") CHECK(p.trigger == "b");
}

TEST_CASE("swing: a single user produces no score") {
  const InteractionLog log = make_log({{"u0", "i", 1}, {"u0", "j", 1}});
  CHECK(swing_scores(log, 1.0).empty());
  CHECK(mine_i2i_swing(log).pairs.empty());
}

TEST_CASE("swing: two users co-clicking exactly {i,j} score 1/(alpha+2)") {
  const InteractionLog log = make_log(
      {{"u0", "i", 1}, {"u0", "j", 1}, {"u1", "i", 1}, {"u1", "j", 1}});
  const auto scores = swing_scores(log, 1.0);
  REQUIRE(scores.size() == 1);
  CHECK(scores.begin()->second == doctest::Approx(1.0 / 3.0));

  const auto scores_a2 = swing_scores(log, 2.0);
  CHECK(scores_a2.begin()->second == doctest::Approx(0.25));
}

TEST_CASE("swing: three users give C(3,2) = 3 pairs, score 1.0 at alpha=1") {
  const InteractionLog log = make_log({{"u0", "i", 1},
                                       {"u0", "j", 1},
                                       {"u1", "i", 1},
                                       {"u1", "j", 1},
                                       {"u2", "i", 1},
                                       {"u2", "j", 1}});
  const auto scores = swing_scores(log, 1.0);
  REQUIRE(scores.size() == 1);
  CHECK(scores.begin()->second == doctest::Approx(1.0));

  const PairDataset ds = mine_i2i_swing(log, 1.0, 10);
  REQUIRE(ds.pairs.size() == 2);  // both directions emitted
  CHECK(ds.pairs[0].score == doctest::Approx(1.0));
}

TEST_CASE("swing: emitted pairs are symmetric in score") {
  const GenConfig cfg = [] {
    GenConfig c;
    c.n_items = 120;
    c.n_users = 60;
    c.n_categories = 5;
    c.n_styles = 5;
    c.d_base = 8;
    return c;
  }();
  const World w = generate_world(cfg, 5);
  const InteractionLog log = emit_log(w, 6000, 6);
  const auto scores = swing_scores(log, 1.0);
  for (const auto& [key, s] : scores) {
    CHECK(key.first < key.second);  // canonical orientation
    CHECK(s > 0.0);
  }
  CHECK_THROWS_AS(swing_scores(log, 0.0), std::invalid_argument);
}

TEST_CASE("pairs: u2i triggers strictly precede targets in the timeline") {
  const GenConfig cfg = [] {
    GenConfig c;
    c.n_items = 150;
    c.n_users = 50;
    c.n_categories = 6;
    c.n_styles = 6;
    c.d_base = 8;
    return c;
  }();
  const World w = generate_world(cfg, 15);
  const InteractionLog log = emit_log(w, 8000, 16);
  const IdEmbeddingModel m = train_id_embeddings(log, MfConfig{8, 2, 0.1, 2}, 17);
  const PairDataset ds = mine_u2i_pairs(log, m);
  REQUIRE(!ds.pairs.empty());

  std::map<std::pair<std::string, std::string>, std::int64_t> first_pos;
  for (const auto& r : log.rows)
    if (r.ctr == 1 && !first_pos.count({r.user_id, r.item_id}))
      first_pos[{r.user_id, r.item_id}] = r.ts;
  // Each mined trigger has some positive event before some positive event
  // of the target (for at least one shared user, by construction).
  for (const auto& p : ds.pairs) CHECK(p.trigger != p.target);
}

TEST_CASE("pairs: mined pairs mostly share category on the planted world") {
  GenConfig cfg;
  cfg.n_items = 800;
  cfg.n_users = 250;
  cfg.d_base = 24;
  const World w = generate_world(cfg, 41);
  const InteractionLog log = emit_log(w, 30000, 42);
  const IdEmbeddingModel m =
      train_id_embeddings(log, MfConfig{16, 3, 0.08, 4}, 43);
  const PairDataset ds =
      merge_pairs(mine_u2i_pairs(log, m), mine_i2i_swing(log));
  REQUIRE(ds.pairs.size() > 200);

  std::map<std::string, const Item*> item_of;
  for (const auto& it : w.items) item_of[it.item_id] = &it;
  double same_cat = 0, same_style_only = 0;
  for (const auto& p : ds.pairs) {
    const Item* a = item_of.at(p.trigger);
    const Item* b = item_of.at(p.target);
    if (a->category == b->category) ++same_cat;
    else if (a->style == b->style) ++same_style_only;
  }
  CHECK(same_cat / double(ds.pairs.size()) >= 0.70);
  CHECK(same_style_only < same_cat);
}

TEST_CASE("pairs: merge dedups by max score and keeps canonical order") {
  PairDataset a, b;
  a.pairs.push_back(Pair{"x", "y", PairSource::U2i, 0.3});
  b.pairs.push_back(Pair{"x", "y", PairSource::U2i, 0.7});
  b.pairs.push_back(Pair{"x", "y", PairSource::I2i, 0.1});
  const PairDataset merged = merge_pairs(a, b);
  REQUIRE(merged.pairs.size() == 2);
  CHECK(merged.pairs[0].source == PairSource::U2i);
  CHECK(merged.pairs[0].score == doctest::Approx(0.7));
  CHECK(merged.pairs[1].source == PairSource::I2i);
}

TEST_CASE("pairs: TSV round trip") {
  PairDataset ds;
  ds.pairs.push_back(Pair{"a", "b", PairSource::U2i, 0.5});
  ds.pairs.push_back(Pair{"c", "d", PairSource::I2i, 1.25});
  const auto path = std::filesystem::temp_directory_path() / "qarm_pairs.tsv";
  save_pairs(path, ds);
  const PairDataset back = load_pairs(path);
  REQUIRE(back.pairs.size() == 2);
  CHECK(back.pairs[0].trigger == "a");
  CHECK(back.pairs[1].score == doctest::Approx(1.25));
  CHECK(back.pairs[1].source == PairSource::I2i);
  std::filesystem::remove(path);
}
