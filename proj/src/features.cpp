#include "qarm/features.hpp"

#include <cmath>
#include <stdexcept>

namespace qarm {

CodeEmbeddingTables::CodeEmbeddingTables(const CodeFeatureConfig& c, Rng& rng)
    : cfg(c) {
  if (cfg.use_vq) {
    vq_table = Param("tables.vq", cfg.vq_vocab + 1, cfg.e);
    vq_table.init_normal(rng, 0.1);
  }
  if (cfg.use_rq) {
    for (std::size_t l = 0; l < cfg.L; ++l) {
      Param p("tables.rq" + std::to_string(l + 1), cfg.rq_vocab + 1, cfg.e);
      p.init_normal(rng, 0.1);
      rq_tables.push_back(std::move(p));
    }
  }
}

std::vector<Param*> CodeEmbeddingTables::params() {
  std::vector<Param*> out;
  if (cfg.use_vq) out.push_back(&vq_table);
  for (auto& t : rq_tables) out.push_back(&t);
  return out;
}

Tape::NodeId lookup_code_embedding(Tape& tape, CodeEmbeddingTables& tables,
                                   const SemanticCodes& codes) {
  const auto& cfg = tables.cfg;
  std::vector<Tape::NodeId> parts;

  // Table row for a stored code: row 0 is the reserved OOV row, catalog
  // codes shift up by one.
  const auto table_row = [](std::size_t code, std::size_t vocab,
                            const char* family, std::size_t pos) {
    if (code == kOovCode) return std::size_t{0};
    if (code >= vocab)
      throw std::invalid_argument("lookup_code_embedding: " +
                                  std::string(family) + " position " +
                                  std::to_string(pos) + " out of range");
    return code + 1;
  };

  if (cfg.use_vq) {
    if (codes.vq.size() != cfg.K)
      throw std::invalid_argument("lookup_code_embedding: expected " +
                                  std::to_string(cfg.K) + " vq codes");
    std::vector<std::size_t> rows(cfg.K);
    for (std::size_t k = 0; k < cfg.K; ++k)
      rows[k] = table_row(codes.vq[k], cfg.vq_vocab, "vq", k + 1);
    parts.push_back(tape.flatten_rows(tape.gather(tables.vq_table, rows)));
  }

  if (cfg.use_rq) {
    if (codes.rq.size() != cfg.L)
      throw std::invalid_argument("lookup_code_embedding: expected " +
                                  std::to_string(cfg.L) + " rq codes");
    for (std::size_t l = 0; l < cfg.L; ++l)
      parts.push_back(tape.gather(
          tables.rq_tables[l],
          {table_row(codes.rq[l], cfg.rq_vocab, "rq", l + 1)}));
  }
  return parts.size() == 1 ? parts[0] : tape.concat_cols(parts);
}

SemanticCodes oov_codes(const CodeFeatureConfig& cfg) {
  SemanticCodes c;
  c.item_id = "<oov>";
  c.vq.assign(cfg.K, kOovCode);
  c.rq.assign(cfg.L, kOovCode);
  return c;
}

std::vector<std::vector<std::size_t>> target_aware_search(
    const std::vector<const SemanticCodes*>& history,
    const SemanticCodes& target,
    const std::vector<std::size_t>& prefix_lengths, std::size_t max_len) {
  for (std::size_t p : prefix_lengths)
    if (p == 0 || p > target.rq.size())
      throw std::invalid_argument("target_aware_search: prefix length " +
                                  std::to_string(p) + " out of range");

  // Only the latest max_len history items are searched; anything older
  // cannot influence the result.
  const std::size_t window = std::min(max_len, history.size());
  std::vector<std::vector<std::size_t>> out(prefix_lengths.size());
  for (std::size_t w = 0; w < window; ++w) {
    const std::size_t idx = history.size() - 1 - w;  // most recent first
    const SemanticCodes& h = *history[idx];
    for (std::size_t pi = 0; pi < prefix_lengths.size(); ++pi) {
      const std::size_t p = prefix_lengths[pi];
      if (h.rq.size() < p) continue;
      bool match = true;
      for (std::size_t l = 0; l < p; ++l)
        if (h.rq[l] != target.rq[l]) {
          match = false;
          break;
        }
      if (match) out[pi].push_back(idx);
    }
  }
  return out;
}

FeatureNets::FeatureNets(const CodeFeatureConfig& cfg, std::size_t h_,
                         std::size_t item_hidden,
                         const std::vector<std::size_t>& plens, Rng& rng)
    : h(h_) {
  const std::size_t in = cfg.code_dim();
  item_W1 = Param("item.W1", in, item_hidden);
  item_b1 = Param("item.b1", 1, item_hidden);
  item_W2 = Param("item.W2", item_hidden, h);
  item_b2 = Param("item.b2", 1, h);
  item_W1.init_xavier(rng);
  item_W2.init_xavier(rng);
  user_W = Param("user.W", in, h);
  user_b = Param("user.b", 1, h);
  user_W.init_xavier(rng);
  for (std::size_t i = 0; i < plens.size(); ++i) {
    PrefixAttention pa;
    const std::string tag = "cross.p" + std::to_string(plens[i]);
    pa.key_W = Param(tag + ".Wk", in, h);
    pa.value_W = Param(tag + ".Wv", in, h);
    pa.null_vec = Param(tag + ".null", 1, h);
    pa.key_W.init_xavier(rng);
    pa.value_W.init_xavier(rng);
    pa.null_vec.init_normal(rng, 0.1);
    prefixes.push_back(std::move(pa));
  }
}

std::vector<Param*> FeatureNets::params() {
  std::vector<Param*> out = {&item_W1, &item_b1, &item_W2, &item_b2,
                             &user_W,  &user_b};
  for (auto& p : prefixes) {
    out.push_back(&p.key_W);
    out.push_back(&p.value_W);
    out.push_back(&p.null_vec);
  }
  return out;
}

FeatureBundle build_feature_bundle(
    Tape& tape, CodeEmbeddingTables& tables, FeatureNets& nets,
    const std::vector<const SemanticCodes*>& history,
    const SemanticCodes& target,
    const std::vector<std::size_t>& prefix_lengths, std::size_t max_matched,
    FeatureTrace* trace) {
  if (prefix_lengths.size() != nets.prefixes.size())
    throw std::invalid_argument("build_feature_bundle: prefix count mismatch");

  const std::size_t code_dim = tables.cfg.code_dim();
  const auto target_code = lookup_code_embedding(tape, tables, target);

  // ItemNet: 2-layer MLP.
  auto item_rep = tape.add_rowvec(
      tape.matmul(tape.relu(tape.add_rowvec(
                      tape.matmul(target_code, tape.leaf(nets.item_W1)),
                      tape.leaf(nets.item_b1))),
                  tape.leaf(nets.item_W2)),
      tape.leaf(nets.item_b2));

  // UserNet: mean-pool history codes, one affine layer. Empty history
  // contributes a zero pool (the affine bias still applies).
  Tape::NodeId pooled;
  if (history.empty()) {
    pooled = tape.constant(Mat(1, code_dim));
  } else {
    std::vector<Tape::NodeId> hist_codes;
    hist_codes.reserve(history.size());
    for (const SemanticCodes* hc : history)
      hist_codes.push_back(lookup_code_embedding(tape, tables, *hc));
    pooled = tape.mean_rows(hist_codes.size() == 1
                                ? hist_codes[0]
                                : tape.concat_rows(hist_codes));
  }
  auto user_rep = tape.add_rowvec(tape.matmul(pooled, tape.leaf(nets.user_W)),
                                  tape.leaf(nets.user_b));

  // CrossNet: per prefix, dot-product attention with item_rep as query.
  const auto matches =
      target_aware_search(history, target, prefix_lengths, max_matched);
  if (trace) trace->attention.assign(prefix_lengths.size(), {});

  std::vector<Tape::NodeId> cross_parts;
  for (std::size_t pi = 0; pi < prefix_lengths.size(); ++pi) {
    auto& pa = nets.prefixes[pi];
    if (matches[pi].empty()) {
      cross_parts.push_back(tape.leaf(pa.null_vec));
      continue;
    }
    std::vector<Tape::NodeId> codes;
    codes.reserve(matches[pi].size());
    for (std::size_t idx : matches[pi])
      codes.push_back(lookup_code_embedding(tape, tables, *history[idx]));
    const auto seq =
        codes.size() == 1 ? codes[0] : tape.concat_rows(codes);  // m x dim
    const auto keys = tape.matmul(seq, tape.leaf(pa.key_W));     // m x h
    const auto values = tape.matmul(seq, tape.leaf(pa.value_W));
    const auto scores = tape.scale(tape.matmul(item_rep, keys, false, true),
                                   1.0 / std::sqrt(double(nets.h)));
    const auto weights = tape.softmax_rows(scores);  // 1 x m
    if (trace) {
      const Mat& w = tape.val(weights);
      trace->attention[pi].assign(w.a.begin(), w.a.end());
    }
    cross_parts.push_back(tape.matmul(weights, values));  // 1 x h
  }

  FeatureBundle out;
  out.item_code_rep = item_rep;
  out.user_code_rep = user_rep;
  if (cross_parts.empty())
    out.cross_code_rep = tape.constant(Mat(1, 0));  // no prefixes configured
  else
    out.cross_code_rep = cross_parts.size() == 1
                             ? cross_parts[0]
                             : tape.concat_cols(cross_parts);
  return out;
}

}  // namespace qarm
