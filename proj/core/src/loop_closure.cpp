#include "ilam/loop_closure.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "ilam/errors.hpp"
#include "ilam/odometry.hpp"

namespace ilam {

namespace {

constexpr char kVocabMagic[4] = {'I', 'V', 'O', 'C'};
constexpr uint32_t kVocabVersion = 1;
constexpr int kKmediansIters = 10;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw FormatError("vocabulary file truncated");
  return v;
}

// Bitwise majority of a cluster; exact ties fall to 0.
Descriptor majority_centroid(std::span<const Descriptor> corpus, std::span<const int> members) {
  std::array<int, 256> ones{};
  for (int m : members) {
    const Descriptor& d = corpus[size_t(m)];
    for (int b = 0; b < 256; ++b) ones[size_t(b)] += d.bit(b) ? 1 : 0;
  }
  Descriptor c;
  for (int b = 0; b < 256; ++b) {
    if (2 * ones[size_t(b)] > int(members.size())) c.set_bit(b);
  }
  return c;
}

}  // namespace

double BowVector::l1_norm() const {
  double s = 0.0;
  for (const auto& [w, v] : weights) s += std::abs(v);
  return s;
}

double similarity(const BowVector& a, const BowVector& b) {
  double l1 = 0.0;
  auto ia = a.weights.begin();
  auto ib = b.weights.begin();
  while (ia != a.weights.end() || ib != b.weights.end()) {
    if (ib == b.weights.end() || (ia != a.weights.end() && ia->first < ib->first)) {
      l1 += std::abs(ia->second);
      ++ia;
    } else if (ia == a.weights.end() || ib->first < ia->first) {
      l1 += std::abs(ib->second);
      ++ib;
    } else {
      l1 += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return 1.0 - 0.5 * l1;
}

Vocabulary Vocabulary::train(std::span<const Descriptor> corpus, int branching, int depth,
                             uint32_t seed, std::span<const int> frame_sizes) {
  if (branching < 2) throw InvalidParam("vocabulary branching must be at least 2");
  if (depth < 1) throw InvalidParam("vocabulary depth must be at least 1");
  double needed = std::pow(double(branching), double(depth));
  if (double(corpus.size()) < needed) {
    throw InsufficientCorpus("vocabulary training needs " +
                             std::to_string(uint64_t(needed)) + " descriptors, got " +
                             std::to_string(corpus.size()));
  }

  Vocabulary voc;
  voc.branching_ = branching;
  voc.depth_ = depth;
  voc.nodes_.push_back(Node{});  // root; its centroid is never compared

  std::mt19937 rng(seed);

  // Recursive k-medians. Children of a node are built contiguously, so
  // the tree is laid out breadth-per-subtree with explicit ranges.
  struct Builder {
    std::span<const Descriptor> corpus;
    std::vector<Node>& nodes;
    int branching;
    int depth;
    std::mt19937& rng;
    int next_word = 0;

    void split(int node_index, std::vector<int> members, int level) {
      if (level == depth || members.size() <= 1) {
        nodes[size_t(node_index)].word_id = next_word++;
        return;
      }
      // Distinct member descriptors bound the usable cluster count.
      std::vector<int> seeds;
      {
        std::uniform_int_distribution<size_t> pick(0, members.size() - 1);
        seeds.push_back(members[pick(rng)]);
        // Farthest-point seeding: deterministic and immune to two seeds
        // landing in one natural cluster.
        while (int(seeds.size()) < branching) {
          int best = -1, best_dist = -1;
          for (int m : members) {
            int d_min = 257;
            for (int s : seeds) d_min = std::min(d_min, hamming(corpus[size_t(m)], corpus[size_t(s)]));
            if (d_min > best_dist) {
              best_dist = d_min;
              best = m;
            }
          }
          if (best_dist == 0) break;  // no more distinct descriptors
          seeds.push_back(best);
        }
      }
      const int k = int(seeds.size());
      if (k <= 1) {
        nodes[size_t(node_index)].word_id = next_word++;
        return;
      }

      std::vector<Descriptor> centroids;
      centroids.reserve(size_t(k));
      for (int s : seeds) centroids.push_back(corpus[size_t(s)]);
      std::vector<int> assign(members.size(), -1);
      for (int it = 0; it < kKmediansIters; ++it) {
        bool changed = false;
        for (size_t i = 0; i < members.size(); ++i) {
          int best = 0, best_d = hamming(corpus[size_t(members[i])], centroids[0]);
          for (int c = 1; c < k; ++c) {
            const int d = hamming(corpus[size_t(members[i])], centroids[size_t(c)]);
            if (d < best_d) {
              best_d = d;
              best = c;
            }
          }
          if (assign[i] != best) {
            assign[i] = best;
            changed = true;
          }
        }
        if (!changed) break;
        for (int c = 0; c < k; ++c) {
          std::vector<int> cluster;
          for (size_t i = 0; i < members.size(); ++i) {
            if (assign[i] == c) cluster.push_back(members[i]);
          }
          if (!cluster.empty()) centroids[size_t(c)] = majority_centroid(corpus, cluster);
        }
      }

      const int first_child = int(nodes.size());
      nodes[size_t(node_index)].first_child = first_child;
      nodes[size_t(node_index)].child_count = k;
      for (int c = 0; c < k; ++c) {
        Node child;
        child.centroid = centroids[size_t(c)];
        nodes.push_back(child);
      }
      for (int c = 0; c < k; ++c) {
        std::vector<int> cluster;
        for (size_t i = 0; i < members.size(); ++i) {
          if (assign[i] == c) cluster.push_back(members[i]);
        }
        if (cluster.empty()) {
          nodes[size_t(first_child + c)].word_id = next_word++;
        } else {
          split(first_child + c, std::move(cluster), level + 1);
        }
      }
    }
  };

  std::vector<int> all(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) all[i] = int(i);
  Builder builder{corpus, voc.nodes_, branching, depth, rng, 0};
  builder.split(0, std::move(all), 0);
  voc.word_count_ = builder.next_word;

  // idf over the document partition; uniform without one.
  voc.idf_.assign(size_t(voc.word_count_), 1.0);
  if (!frame_sizes.empty()) {
    std::vector<int> docs_with(size_t(voc.word_count_), 0);
    int n_docs = 0;
    size_t offset = 0;
    for (int fs : frame_sizes) {
      if (fs < 0 || offset + size_t(fs) > corpus.size()) {
        throw InvalidInput("vocabulary frame_sizes do not partition the corpus");
      }
      std::vector<uint8_t> seen(size_t(voc.word_count_), 0);
      for (int i = 0; i < fs; ++i) {
        seen[size_t(voc.word_of(corpus[offset + size_t(i)]))] = 1;
      }
      for (int w = 0; w < voc.word_count_; ++w) docs_with[size_t(w)] += seen[size_t(w)];
      offset += size_t(fs);
      ++n_docs;
    }
    if (offset != corpus.size()) {
      throw InvalidInput("vocabulary frame_sizes do not partition the corpus");
    }
    for (int w = 0; w < voc.word_count_; ++w) {
      voc.idf_[size_t(w)] = std::log(double(n_docs + 1) / double(docs_with[size_t(w)] + 1));
    }
  }
  return voc;
}

int Vocabulary::word_of(const Descriptor& d) const {
  if (nodes_.empty()) throw Error("vocabulary is empty");
  int node = 0;
  while (nodes_[size_t(node)].word_id < 0) {
    const Node& n = nodes_[size_t(node)];
    if (n.child_count == 0) throw Error("vocabulary node has neither word nor children");
    int best = n.first_child;
    int best_d = hamming(d, nodes_[size_t(best)].centroid);
    for (int c = 1; c < n.child_count; ++c) {
      const int d_c = hamming(d, nodes_[size_t(n.first_child + c)].centroid);
      if (d_c < best_d) {
        best_d = d_c;
        best = n.first_child + c;
      }
    }
    node = best;
  }
  return nodes_[size_t(node)].word_id;
}

BowVector Vocabulary::transform(std::span<const Descriptor> descriptors) const {
  BowVector bow;
  if (descriptors.empty()) return bow;
  for (const auto& d : descriptors) {
    bow.weights[word_of(d)] += 1.0;
  }
  double total = 0.0;
  for (auto& [w, v] : bow.weights) {
    v = v / double(descriptors.size()) * idf_[size_t(w)];
    total += v;
  }
  if (total > 0.0) {
    for (auto& [w, v] : bow.weights) v /= total;
  }
  return bow;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kVocabMagic, 4);
  put<uint32_t>(os, kVocabVersion);
  put<uint32_t>(os, uint32_t(branching_));
  put<uint32_t>(os, uint32_t(depth_));
  put<uint32_t>(os, uint32_t(nodes_.size()));
  for (const auto& n : nodes_) {
    for (uint64_t w : n.centroid.words) put<uint64_t>(os, w);
    put<int32_t>(os, n.first_child);
    put<int32_t>(os, n.child_count);
    put<int32_t>(os, n.word_id);
  }
  put<uint32_t>(os, uint32_t(word_count_));
  for (double v : idf_) put<double>(os, v);
  if (!os) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kVocabMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a vocabulary file");
  }
  const auto version = get<uint32_t>(is);
  if (version != kVocabVersion) {
    throw FormatError(path.string() + ": unsupported vocabulary version " +
                      std::to_string(version));
  }
  Vocabulary voc;
  voc.branching_ = int(get<uint32_t>(is));
  voc.depth_ = int(get<uint32_t>(is));
  const auto node_count = get<uint32_t>(is);
  if (node_count == 0 || node_count > 10'000'000) {
    throw FormatError(path.string() + ": implausible node count");
  }
  voc.nodes_.resize(node_count);
  for (auto& n : voc.nodes_) {
    for (auto& w : n.centroid.words) w = get<uint64_t>(is);
    n.first_child = get<int32_t>(is);
    n.child_count = get<int32_t>(is);
    n.word_id = get<int32_t>(is);
    if (n.first_child >= 0 &&
        (n.first_child + n.child_count > int(node_count) || n.child_count <= 0)) {
      throw FormatError(path.string() + ": node child range out of bounds");
    }
  }
  voc.word_count_ = int(get<uint32_t>(is));
  voc.idf_.resize(size_t(voc.word_count_));
  for (auto& v : voc.idf_) v = get<double>(is);
  return voc;
}

void LoopDatabase::add(int keyframe_id, BowVector bow) {
  if (!entries_.empty() && entries_.back().first >= keyframe_id) {
    throw InvalidInput("loop database keyframe ids must be strictly increasing");
  }
  entries_.emplace_back(keyframe_id, std::move(bow));
}

std::vector<std::pair<int, double>> LoopDatabase::query(int current_id, const BowVector& bow,
                                                        int gap, int top_n,
                                                        double threshold) const {
  std::vector<std::pair<int, double>> scored;
  for (const auto& [id, stored] : entries_) {
    if (id + gap >= current_id) continue;
    const double s = similarity(bow, stored);
    if (s >= threshold) scored.emplace_back(id, s);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (int(scored.size()) > top_n) scored.resize(size_t(top_n));
  return scored;
}

std::optional<LoopCandidate> verify_loop(const IntensityFrame& query_frame, int query_id,
                                         const IntensityFrame& candidate_frame, int candidate_id,
                                         double sim, const Config& cfg) {
  const auto matches =
      match(query_frame.features, candidate_frame.features, cfg.max_hamming, cfg.match_ratio);
  if (int(matches.size()) < cfg.min_matches) return std::nullopt;

  std::vector<Eigen::Vector3d> query_pts, cand_pts;
  std::vector<double> scores;
  query_pts.reserve(matches.size());
  cand_pts.reserve(matches.size());
  scores.reserve(matches.size());
  for (const auto& m : matches) {
    query_pts.push_back(query_frame.features[size_t(m.index_prev)].point3d);
    cand_pts.push_back(candidate_frame.features[size_t(m.index_curr)].point3d);
    scores.push_back(m.score);
  }
  OdometryEstimate est;
  try {
    est = register_matched(query_pts, cand_pts, scores, cfg.min_matches);
  } catch (const DegenerateConfiguration&) {
    return std::nullopt;
  }
  if (est.inlier_count < cfg.loop_min_inliers || est.mean_residual >= cfg.loop_max_residual) {
    return std::nullopt;
  }
  LoopCandidate out;
  out.query_id = query_id;
  out.match_id = candidate_id;
  out.similarity = sim;
  out.relative = est.relative;
  out.inlier_count = est.inlier_count;
  out.mean_residual = est.mean_residual;
  return out;
}

}  // namespace ilam
