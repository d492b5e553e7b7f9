#include "avatar/docid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "avatar/kernels.hpp"

namespace avatar {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Tensor embed_documents(const Corpus& corpus, const DocidConfig& cfg) {
  if (corpus.documents.empty()) throw std::invalid_argument("embed_documents: empty corpus");
  const int n = static_cast<int>(corpus.documents.size());
  const int dim = cfg.embed_dim;

  // Per-document trigram counts, hashed into dim buckets.
  std::vector<std::unordered_map<int, double>> tf(n);
  std::vector<int> df(dim, 0);
  for (int d = 0; d < n; ++d) {
    for (const auto& tok : truncate_document(corpus.documents[d], cfg.max_body_tokens)) {
      const std::string padded = "^" + tok + "$";
      for (size_t i = 0; i + 3 <= padded.size(); ++i) {
        const int bucket = static_cast<int>(fnv1a(padded.substr(i, 3)) % dim);
        tf[d][bucket] += 1.0;
      }
    }
    for (const auto& [bucket, cnt] : tf[d]) ++df[bucket];
  }

  Tensor out(n, dim);
  for (int d = 0; d < n; ++d) {
    double norm2 = 0.0;
    for (const auto& [bucket, cnt] : tf[d]) {
      const double idf = std::log((1.0 + n) / (1.0 + df[bucket])) + 1.0;
      const double v = cnt * idf;
      out.at(d, bucket) = v;
      norm2 += v * v;
    }
    if (norm2 <= 0.0)
      throw std::runtime_error("embed_documents: document '" +
                               corpus.documents[d].external_id + "' produced no n-grams");
    const double inv = 1.0 / std::sqrt(norm2);
    for (int c = 0; c < dim; ++c) out.at(d, c) *= inv;
  }
  return out;
}

namespace {

struct KMeansResult {
  std::vector<int> assign;   // member position -> cluster id (compacted)
  int n_clusters = 0;
};

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  Tensor out(static_cast<int>(rows.size()), x.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(x.row(rows[i]), x.row(rows[i]) + x.cols, out.row(static_cast<int>(i)));
  return out;
}

// k-means with k-means++ seeding, 50 iterations, tolerance 1e-6, ties to the
// lowest centroid index, empty clusters refilled with the farthest point.
KMeansResult kmeans(const Tensor& x, int k, std::mt19937_64& rng) {
  const int n = x.rows;
  k = std::min(k, n);
  Tensor centroids(k, x.cols);

  // k-means++ seeding
  std::uniform_int_distribution<int> first(0, n - 1);
  std::vector<int> chosen = {first(rng)};
  std::vector<double> mind(n, 1e300);
  std::copy(x.row(chosen[0]), x.row(chosen[0]) + x.cols, centroids.row(0));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      const double* xi = x.row(i);
      const double* cc = centroids.row(c - 1);
      for (int p = 0; p < x.cols; ++p) {
        const double diff = xi[p] - cc[p];
        s += diff * diff;
      }
      mind[i] = std::min(mind[i], s);
      total += mind[i];
    }
    int pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += mind[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      std::uniform_int_distribution<int> any(0, n - 1);
      pick = any(rng);
    }
    std::copy(x.row(pick), x.row(pick) + x.cols, centroids.row(c));
  }

  std::vector<int> assign(n, 0);
  Tensor dist;
  for (int iter = 0; iter < 50; ++iter) {
    kern::sqdist(dist, x, centroids);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (dist.at(i, c) < dist.at(i, best)) best = c;
      assign[i] = best;
    }
    // refill empty clusters with the farthest point from its centroid
    for (int c = 0; c < k; ++c) {
      bool empty = true;
      for (int i = 0; i < n; ++i)
        if (assign[i] == c) {
          empty = false;
          break;
        }
      if (!empty) continue;
      int far = 0;
      double fard = -1.0;
      for (int i = 0; i < n; ++i) {
        const double di = dist.at(i, assign[i]);
        if (di > fard) {
          fard = di;
          far = i;
        }
      }
      assign[far] = c;
    }
    Tensor next(k, x.cols);
    std::vector<int> count(k, 0);
    for (int i = 0; i < n; ++i) {
      ++count[assign[i]];
      const double* xi = x.row(i);
      double* cr = next.row(assign[i]);
      for (int p = 0; p < x.cols; ++p) cr[p] += xi[p];
    }
    double movement = 0.0;
    for (int c = 0; c < k; ++c) {
      if (count[c] == 0) continue;
      double m = 0.0;
      for (int p = 0; p < x.cols; ++p) {
        next.at(c, p) /= count[c];
        const double diff = next.at(c, p) - centroids.at(c, p);
        m += diff * diff;
      }
      movement = std::max(movement, std::sqrt(m));
      std::copy(next.row(c), next.row(c) + x.cols, centroids.row(c));
    }
    if (movement < 1e-6) break;
  }

  // Compact cluster ids to 0..m-1 preserving centroid-index order.
  std::vector<int> remap(k, -1);
  int next_id = 0;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < n; ++i)
      if (assign[i] == c) {
        remap[c] = next_id++;
        break;
      }
  KMeansResult res;
  res.assign.resize(n);
  for (int i = 0; i < n; ++i) res.assign[i] = remap[assign[i]];
  res.n_clusters = next_id;
  return res;
}

void split_node(ClusterNode& node, const Tensor& embeddings, int k, int leaf_cap,
                std::mt19937_64& rng) {
  const int n = static_cast<int>(node.members.size());
  if (n <= leaf_cap) return;
  Tensor sub = gather_rows(embeddings, node.members);
  KMeansResult km = kmeans(sub, k, rng);
  if (km.n_clusters <= 1) return;  // degenerate split, keep as leaf
  node.children.resize(km.n_clusters);
  for (auto& ch : node.children) ch = std::make_unique<ClusterNode>();
  for (int i = 0; i < n; ++i) node.children[km.assign[i]]->members.push_back(node.members[i]);
  for (auto& ch : node.children) split_node(*ch, embeddings, k, leaf_cap, rng);
}

}  // namespace

std::unique_ptr<ClusterNode> hierarchical_cluster(const Tensor& embeddings, int k, int leaf_cap,
                                                  uint64_t seed) {
  if (k < 2) throw std::invalid_argument("hierarchical_cluster: k < 2");
  if (leaf_cap < 1) throw std::invalid_argument("hierarchical_cluster: leaf_cap < 1");
  auto root = std::make_unique<ClusterNode>();
  root->members.resize(embeddings.rows);
  for (int i = 0; i < embeddings.rows; ++i) root->members[i] = i;
  std::mt19937_64 rng(seed);
  split_node(*root, embeddings, k, leaf_cap, rng);
  return root;
}

std::string DocidMap::key(const std::vector<int>& tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(tokens[i]);
  }
  return s;
}

namespace {

void assign_rec(const ClusterNode& node, int k, std::vector<int>& path, DocidMap& map) {
  if (node.is_leaf()) {
    const int n = static_cast<int>(node.members.size());
    int width = 1;
    for (long long cap = k; cap < n; cap *= k) ++width;
    for (int pos = 0; pos < n; ++pos) {
      std::vector<int> id = path;
      // base-k position digits, most significant first
      for (int w = width - 1; w >= 0; --w) {
        long long div = 1;
        for (int t = 0; t < w; ++t) div *= k;
        id.push_back(static_cast<int>((pos / div) % k));
      }
      map.forward[node.members[pos]] = id;
      if (!map.reverse.emplace(DocidMap::key(id), node.members[pos]).second)
        throw std::logic_error("assign_docids: duplicate docid");
    }
    return;
  }
  for (size_t c = 0; c < node.children.size(); ++c) {
    path.push_back(static_cast<int>(c));
    assign_rec(*node.children[c], k, path, map);
    path.pop_back();
  }
}

int count_members(const ClusterNode& n) {
  if (n.is_leaf()) return static_cast<int>(n.members.size());
  int total = 0;
  for (const auto& c : n.children) total += count_members(*c);
  return total;
}

}  // namespace

DocidMap assign_docids(const ClusterNode& tree, int k) {
  DocidMap map;
  map.forward.resize(count_members(tree));
  std::vector<int> path;
  assign_rec(tree, k, path, map);
  return map;
}

DocidMap build_docid_map(const Corpus& corpus, const DocidConfig& cfg, uint64_t seed) {
  const Tensor emb = embed_documents(corpus, cfg);
  const auto tree = hierarchical_cluster(emb, cfg.k, cfg.leaf_cap, seed);
  return assign_docids(*tree, cfg.k);
}

void save_docid_map(const DocidMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write docid map: " + path);
  for (size_t i = 0; i < map.forward.size(); ++i)
    out << i << '\t' << DocidMap::key(map.forward[i]) << '\n';
}

DocidMap load_docid_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open docid map: " + path);
  DocidMap map;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("malformed docid map line: " + line);
    const int idx = std::stoi(line.substr(0, tab));
    std::istringstream toks(line.substr(tab + 1));
    std::vector<int> id;
    int t;
    while (toks >> t) id.push_back(t);
    if (idx >= static_cast<int>(map.forward.size())) map.forward.resize(idx + 1);
    map.forward[idx] = id;
    if (!map.reverse.emplace(DocidMap::key(id), idx).second)
      throw std::runtime_error("duplicate docid in map file");
  }
  return map;
}

}  // namespace avatar
