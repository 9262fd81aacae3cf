// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/probes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "replaygate/errors.hpp"
#include "replaygate/replay_analysis.hpp"

namespace replaygate {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_matrix(const Rows& rows) {
  if (rows.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw DimensionError("rows differ in length");
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

std::vector<double> to_row(const nc::Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<int> sorted_classes(const std::vector<int>& y) {
  std::vector<int> c = y;
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

void accumulate_std(const std::vector<nc::Tensor>& msgs, std::vector<double>& sum,
                    std::vector<double>& sq, std::size_t& n) {
  for (const nc::Tensor& m : msgs) {
    if (sum.empty()) {
      sum.assign(m.size(), 0.0);
      sq.assign(m.size(), 0.0);
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      sum[i] += m[i];
      sq[i] += m[i] * m[i];
    }
    ++n;
  }
}

std::vector<double> finish_std(const std::vector<double>& sum, const std::vector<double>& sq,
                               std::size_t n) {
  std::vector<double> out(sum.size(), 0.0);
  if (n < 2) return out;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / static_cast<double>(n);
    out[i] = std::sqrt(std::max(0.0, sq[i] / static_cast<double>(n) - mean * mean));
  }
  return out;
}

template <typename Fn>
void for_each_replay(const Session& s, Fn&& fn) {
  for (std::size_t i = 0; i < s.moves.size(); ++i) {
    const MoveRecord& m = s.moves[i];
    if (m.replay) fn(*m.replay, i);
    if (m.arrival && m.arrival->replay) fn(*m.arrival->replay, i);
  }
}

}  // namespace

MessageStats message_stats(const std::vector<Session>& sessions) {
  std::vector<double> sp, qp, sh, qh;
  std::size_t np = 0;
  std::size_t nh = 0;
  for (const Session& s : sessions) {
    for_each_replay(s, [&](const ReplayEvent& ev, std::size_t) {
      accumulate_std(ev.msgs_to_pfc, sp, qp, np);
      accumulate_std(ev.msgs_to_hf, sh, qh, nh);
    });
  }
  return {finish_std(sp, qp, np), finish_std(sh, qh, nh)};
}

AblationSpec with_matched_noise(AblationSpec spec, const MessageStats& stats) {
  spec.noise_std_to_pfc = stats.std_to_pfc;
  spec.noise_std_to_hf = stats.std_to_hf;
  return spec;
}

AblationResult ablate_and_measure(Agent& agent, const EnvConfig& env, const TestProtocol& protocol,
                                  const AblationSpec& spec, std::size_t n_sessions,
                                  std::uint64_t seed) {
  AblationResult r;
  std::vector<double> expl;
  for (std::size_t i = 0; i < n_sessions; ++i) {
    const Session s = run_session(agent, env, protocol, nc::mix_seed(seed, i), spec);
    r.session_rewards.push_back(s.mean_reward());
    expl.push_back(s.exploration_steps);
  }
  r.reward = mean_se(r.session_rewards);
  r.exploration_steps = mean_se(expl);
  return r;
}

void GaussianNb::fit(const Rows& x, const std::vector<int>& y) {
  if (x.size() != y.size() || x.empty()) throw DimensionError("GaussianNb::fit: bad training set");
  classes_ = sorted_classes(y);
  const std::size_t d = x[0].size();
  log_prior_.assign(classes_.size(), 0.0);
  mean_.assign(classes_.size(), std::vector<double>(d, 0.0));
  var_.assign(classes_.size(), std::vector<double>(d, 0.0));
  std::vector<std::size_t> count(classes_.size(), 0);
  auto cls = [&](int label) {
    return static_cast<std::size_t>(std::lower_bound(classes_.begin(), classes_.end(), label) -
                                    classes_.begin());
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = cls(y[i]);
    ++count[c];
    for (std::size_t j = 0; j < d; ++j) mean_[c][j] += x[i][j];
  }
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    for (double& v : mean_[c]) v /= static_cast<double>(count[c]);
    log_prior_[c] = std::log(static_cast<double>(count[c]) / static_cast<double>(x.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t c = cls(y[i]);
    for (std::size_t j = 0; j < d; ++j) {
      const double e = x[i][j] - mean_[c][j];
      var_[c][j] += e * e;
    }
  }
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    for (double& v : var_[c]) v = std::max(v / static_cast<double>(count[c]), var_floor_);
  }
}

int GaussianNb::predict(const std::vector<double>& x) const {
  double best = -std::numeric_limits<double>::infinity();
  int label = classes_.empty() ? 0 : classes_[0];
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    double ll = log_prior_[c];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double e = x[j] - mean_[c][j];
      ll -= 0.5 * (std::log(2.0 * std::numbers::pi * var_[c][j]) + e * e / var_[c][j]);
    }
    if (ll > best) {
      best = ll;
      label = classes_[c];
    }
  }
  return label;
}

void RidgeClassifier::fit(const Rows& x, const std::vector<int>& y) {
  if (x.size() != y.size() || x.empty()) throw DimensionError("RidgeClassifier::fit: bad training set");
  classes_ = sorted_classes(y);
  const Mat xm = to_matrix(x);
  const Vec xbar = xm.colwise().mean();
  const Mat xc = xm.rowwise() - xbar.transpose();
  Mat targets = Mat::Constant(xm.rows(), static_cast<Eigen::Index>(classes_.size()), -1.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = std::lower_bound(classes_.begin(), classes_.end(), y[i]) - classes_.begin();
    targets(static_cast<Eigen::Index>(i), c) = 1.0;
  }
  const Vec ybar = targets.colwise().mean();
  const Mat yc = targets.rowwise() - ybar.transpose();
  Mat gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda_;
  const Mat w = gram.ldlt().solve(xc.transpose() * yc);
  weights_.assign(classes_.size(), std::vector<double>(x[0].size() + 1, 0.0));
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    for (std::size_t j = 0; j < x[0].size(); ++j) weights_[c][j] = w(static_cast<Eigen::Index>(j), ci);
    weights_[c].back() = ybar(ci) - xbar.dot(w.col(ci));
  }
}

int RidgeClassifier::predict(const std::vector<double>& x) const {
  double best = -std::numeric_limits<double>::infinity();
  int label = classes_.empty() ? 0 : classes_[0];
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    double s = weights_[c].back();
    for (std::size_t j = 0; j < x.size(); ++j) s += weights_[c][j] * x[j];
    if (s > best) {
      best = s;
      label = classes_[c];
    }
  }
  return label;
}

DecodeResult decode(const Rows& x, const std::vector<int>& y, DecoderKind kind, std::uint64_t seed,
                    bool shuffle_labels, double train_fraction) {
  if (x.size() != y.size()) throw DimensionError("decode: rows and labels differ in length");
  if (x.size() < 2) throw ContractError("decode: need at least two samples");
  nc::Rng rng(seed);
  std::vector<int> labels = y;
  if (shuffle_labels) {
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.uniform_index(i)]);
  }
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(x.size()))), 1,
      x.size() - 1);
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());

  const auto classes = sorted_classes(labels);
  auto train_has_all = [&] {
    for (int c : classes) {
      if (std::none_of(train.begin(), train.end(), [&](std::size_t i) { return labels[i] == c; })) {
        return false;
      }
    }
    return true;
  };
  if (!train_has_all()) {
    train.clear();
    test.clear();
    for (int c : classes) {
      std::vector<std::size_t> members;
      for (std::size_t i : idx) {
        if (labels[i] == c) members.push_back(i);
      }
      const auto k = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size()))));
      for (std::size_t j = 0; j < members.size(); ++j) (j < k ? train : test).push_back(members[j]);
    }
  }

  Rows xt;
  std::vector<int> yt;
  for (std::size_t i : train) {
    xt.push_back(x[i]);
    yt.push_back(labels[i]);
  }
  GaussianNb nb;
  RidgeClassifier ridge;
  if (kind == DecoderKind::kGaussianNb) nb.fit(xt, yt);
  else ridge.fit(xt, yt);

  DecodeResult r;
  r.n_train = train.size();
  r.n_test = test.size();
  if (test.empty()) return r;
  std::size_t hits = 0;
  for (std::size_t i : test) {
    const int p = kind == DecoderKind::kGaussianNb ? nb.predict(x[i]) : ridge.predict(x[i]);
    if (p == labels[i]) ++hits;
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  r.se = std::sqrt(r.accuracy * (1.0 - r.accuracy) / static_cast<double>(test.size()));
  return r;
}

const char* to_string(StateSource s) {
  switch (s) {
    case StateSource::kHf: return "HF";
    case StateSource::kPfc: return "PFC";
    case StateSource::kPassage: return "passage";
  }
  return "unknown";
}

std::string stage_name(std::size_t stage, std::size_t n_steps) {
  if (stage == 0) return "pre_replay";
  if (stage > n_steps) return "post_replay";
  return "replay_step_" + std::to_string(stage);
}

namespace {

std::vector<double> replay_features(const ReplayEvent& ev, StateSource source, std::size_t stage) {
  const std::size_t n = ev.n_steps;
  if (stage > n + 1) throw ContractError("replay stage out of range");
  switch (source) {
    case StateSource::kHf:
      if (stage == 0) return to_row(ev.pre_state.h);
      if (stage > n) return to_row(ev.post_state.h);
      return to_row(ev.h_states[stage - 1]);
    case StateSource::kPfc:
      if (stage == 0) return to_row(ev.pre_state.theta);
      if (stage > n) return to_row(ev.post_state.theta);
      return to_row(ev.theta_states[stage - 1]);
    case StateSource::kPassage:
      if (stage == 0 || stage > n) throw ContractError("passage messages exist only during replay");
      return to_row(ev.msgs_to_pfc[stage - 1]);
  }
  return {};
}

/// Indices of moves whose (pre-decision) replay was opened by a checkpoint reward.
std::vector<std::size_t> checkpoint_replays(const Session& s, Phase phase) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.moves.size(); ++i) {
    const MoveRecord& m = s.moves[i];
    if (m.phase == phase && m.replay && !m.replay->terminal) out.push_back(i);
  }
  return out;
}

}  // namespace

LabelledRows reward_location_dataset(const std::vector<Session>& sessions, const EnvConfig& env,
                                     StateSource source, std::size_t stage) {
  LabelledRows out;
  for (const Session& s : sessions) {
    const auto pre = checkpoint_replays(s, Phase::kTestPre);
    const auto post = checkpoint_replays(s, Phase::kTestPost);
    if (pre.empty() || post.empty()) continue;
    const ReplayEvent& a = *s.moves[pre.back()].replay;
    const ReplayEvent& b = *s.moves[post.front()].replay;
    if (a.trigger_pos != env.checkpoint1 || b.trigger_pos != env.checkpoint2) continue;
    out.x.push_back(replay_features(a, source, stage));
    out.y.push_back(0);
    out.x.push_back(replay_features(b, source, stage));
    out.y.push_back(1);
  }
  return out;
}

LabelledRows future_action_dataset(const std::vector<Session>& sessions, const EnvConfig& env,
                                   std::size_t encounter, std::size_t horizon) {
  if (encounter == 0 || horizon == 0) throw ContractError("encounter and horizon are 1-based");
  LabelledRows out;
  for (const Session& s : sessions) {
    const auto post = checkpoint_replays(s, Phase::kTestPost);
    if (post.size() < encounter) continue;
    const std::size_t i = post[encounter - 1];
    const std::size_t j = i + horizon - 1;
    if (j >= s.moves.size()) continue;
    if (s.moves[i].replay->trigger_pos != env.checkpoint2) continue;
    out.x.push_back(to_row(s.moves[i].replay->post_state.theta));
    out.y.push_back(s.moves[j].action);
  }
  return out;
}

ValueMap stop_and_scan(Agent& agent, const EnvConfig& env, const AgentState& start, GridPos pos,
                       nc::Rng& rng, std::size_t steps) {
  const auto cells = static_cast<std::size_t>(env.num_cells());
  ValueMap map{std::vector<double>(cells, 0.0), std::vector<std::size_t>(cells, 0), "scan"};
  AgentState state = start;
  state.replay_gate = false;
  EnvState where;
  where.agent = pos;
  int prev_action = -1;
  for (std::size_t t = 0; t < steps; ++t) {
    const Observation obs = render_observation(where, env, 0.0, prev_action);
    const TickResult r = agent.tick(state, &obs);
    const auto c = static_cast<std::size_t>(env.cell_index(where.agent));
    map.value[c] += r.value;
    ++map.visits[c];
    state = r.next;
    prev_action = static_cast<int>(rng.uniform_index(kNumActions));
    where.agent = move(where.agent, static_cast<Action>(prev_action), env);
  }
  for (std::size_t c = 0; c < cells; ++c) {
    map.value[c] = map.visits[c] ? map.value[c] / static_cast<double>(map.visits[c])
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return map;
}

ValueMap merge_maps(const std::vector<ValueMap>& maps, const std::string& provenance) {
  if (maps.empty()) throw ContractError("merge_maps: no maps");
  const std::size_t cells = maps[0].value.size();
  ValueMap out{std::vector<double>(cells, 0.0), std::vector<std::size_t>(cells, 0), provenance};
  for (const ValueMap& m : maps) {
    for (std::size_t c = 0; c < cells; ++c) {
      if (!m.visited(c)) continue;
      out.value[c] += m.value[c] * static_cast<double>(m.visits[c]);
      out.visits[c] += m.visits[c];
    }
  }
  for (std::size_t c = 0; c < cells; ++c) {
    out.value[c] = out.visits[c] ? out.value[c] / static_cast<double>(out.visits[c])
                                 : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double dog_advantage(const ValueMap& map, const EnvConfig& env, double sigma) {
  auto density = [&](GridPos c, GridPos centre) {
    const double dx = c.x - centre.x;
    const double dy = c.y - centre.y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) /
           (2.0 * std::numbers::pi * sigma * sigma);
  };
  double adv = 0.0;
  for (int i = 0; i < env.num_cells(); ++i) {
    if (!map.visited(static_cast<std::size_t>(i))) continue;
    const GridPos c = env.cell_pos(i);
    adv += map.value[static_cast<std::size_t>(i)] * (density(c, env.checkpoint2) - density(c, env.checkpoint1));
  }
  return adv;
}

PathAdvantage path_value_advantage(const ValueMap& map, const EnvConfig& env) {
  const auto t = canonical_templates(env);
  // Mean over corridor cells not shared with the competing corridor.
  auto exclusive_mean = [&](const PathTemplate& p, const PathTemplate& other) {
    double s = 0.0;
    std::size_t n = 0;
    for (GridPos c : p.primary) {
      if (std::find(other.primary.begin(), other.primary.end(), c) != other.primary.end()) continue;
      const auto i = static_cast<std::size_t>(env.cell_index(c));
      if (!map.visited(i)) continue;
      s += map.value[i];
      ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  };
  auto leg = [&](PathLabel to_c2, PathLabel to_c1) {
    const PathTemplate& a = t[static_cast<std::size_t>(to_c2)];
    const PathTemplate& b = t[static_cast<std::size_t>(to_c1)];
    return exclusive_mean(a, b) - exclusive_mean(b, a);
  };
  return {leg(PathLabel::kSC2, PathLabel::kSC1), leg(PathLabel::kC2G, PathLabel::kC1G)};
}

PcaResult pca_aev_dimension(const Rows& states, double threshold) {
  if (states.empty()) throw ContractError("pca_aev_dimension: no samples");
  const Mat x = to_matrix(states);
  const Mat xc = x.rowwise() - x.colwise().mean();
  const Mat cov = (xc.transpose() * xc) / static_cast<double>(std::max<Eigen::Index>(x.rows() - 1, 1));
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  const Vec ev = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Mat vecs = eig.eigenvectors().rowwise().reverse();

  PcaResult r;
  const double total = ev.sum();
  for (Eigen::Index i = 0; i < ev.size(); ++i) r.explained.push_back(total > 0 ? ev(i) / total : 0.0);
  if (total > 0.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r.explained.size(); ++i) {
      acc += r.explained[i];
      if (acc >= threshold - 1e-12) {
        r.dimension = i + 1;
        break;
      }
    }
  }
  const Eigen::Index k = std::min<Eigen::Index>(3, vecs.cols());
  const Mat proj = xc * vecs.leftCols(k);
  for (Eigen::Index i = 0; i < proj.rows(); ++i) {
    std::array<double, 3> p{};
    for (Eigen::Index j = 0; j < k; ++j) p[static_cast<std::size_t>(j)] = proj(i, j);
    r.embedding.push_back(p);
  }
  return r;
}

double knn_dispersion(const Rows& states, std::size_t k) {
  if (k == 0 || states.size() < k + 1) {
    throw ContractError("knn_dispersion: need at least K+1 points");
  }
  const Mat x = to_matrix(states);
  const auto n = x.rows();
  Mat d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
  }
  double total = 0.0;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    idx.erase(idx.begin() + i);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return d2(i, a) < d2(i, b) || (d2(i, a) == d2(i, b) && a < b);
                      });
    Vec centroid = Vec::Zero(x.cols());
    for (std::size_t j = 0; j < k; ++j) centroid += x.row(idx[j]).transpose();
    centroid /= static_cast<double>(k);
    total += (x.row(i).transpose() - centroid).squaredNorm();
  }
  return total / static_cast<double>(n);
}

const char* to_string(ManifoldStage s) {
  switch (s) {
    case ManifoldStage::kBefore: return "before";
    case ManifoldStage::kSwitch: return "switch";
    case ManifoldStage::kAfter: return "after";
  }
  return "unknown";
}

Rows pfc_states(const Session& session, ManifoldStage stage, std::size_t window) {
  const int pre = static_cast<int>(session.pre_trials);
  const int w = static_cast<int>(window);
  int lo = 0;
  int hi = 0;
  switch (stage) {
    case ManifoldStage::kBefore: lo = pre - w; hi = pre; break;
    case ManifoldStage::kSwitch: lo = pre; hi = pre + 1; break;
    case ManifoldStage::kAfter: lo = pre + 1; hi = pre + 1 + w; break;
  }
  Rows out;
  for (const MoveRecord& m : session.moves) {
    if (m.episode < lo || m.episode >= hi) continue;
    out.push_back(to_row(m.state_after.theta));
    if (m.replay) {
      for (const nc::Tensor& t : m.replay->theta_states) out.push_back(to_row(t));
    }
    if (m.arrival) {
      out.push_back(to_row(m.arrival->state_after.theta));
      if (m.arrival->replay) {
        for (const nc::Tensor& t : m.arrival->replay->theta_states) out.push_back(to_row(t));
      }
    }
  }
  return out;
}

Rows subsample(const Rows& rows, std::size_t n, nc::Rng& rng) {
  if (n >= rows.size()) return rows;
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Rows out;
  for (std::size_t i : idx) out.push_back(rows[i]);
  return out;
}

}  // namespace replaygate
