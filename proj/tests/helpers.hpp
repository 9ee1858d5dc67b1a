#pragma once

#include <random>
#include <string>
#include <vector>

#include "mtb/corpus.hpp"
#include "mtb/encoder.hpp"
#include "mtb/episodes.hpp"
#include "mtb/pairgen.hpp"

namespace testutil {

/// Random well-formed statement: [CLS] tokens [SEP] with two ordered spans.
inline mtb::RelationStatement random_statement(mtb::Rng& rng, int vocab_size, int min_len = 4, int max_len = 12,
                                               const std::string& e1 = "A", const std::string& e2 = "B") {
  std::uniform_int_distribution<int> len_d(min_len, max_len);
  const int n = len_d(rng);
  mtb::RelationStatement s;
  s.x.push_back(mtb::reserved::kCls);
  std::uniform_int_distribution<int> tok(mtb::reserved::kCount, vocab_size - 1);
  for (int i = 0; i < n; ++i) s.x.push_back(tok(rng));
  s.x.push_back(mtb::reserved::kSep);
  // four cut points 1 <= a < b <= c < d <= n
  std::vector<int> cuts;
  while (true) {
    cuts = {1 + static_cast<int>(rng() % n), 1 + static_cast<int>(rng() % n), 1 + static_cast<int>(rng() % n),
            1 + static_cast<int>(rng() % (n + 1))};
    std::sort(cuts.begin(), cuts.end());
    if (cuts[0] < cuts[1] && cuts[2] < cuts[3] && cuts[3] <= n + 1 && cuts[1] <= cuts[2]) break;
  }
  s.s1 = {cuts[0], cuts[1]};
  s.s2 = {cuts[2], cuts[3]};
  s.e1 = e1;
  s.e2 = e2;
  return s;
}

/// Fills every parameter with non-trivial values so gradient checks exercise all paths.
template <class T>
void randomize(mtb::EncoderParams<T>& params, std::uint64_t seed, double scale = 0.3) {
  mtb::Rng rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  params.for_each([&](const std::string& name, mtb::Matrix<T>& m) {
    const bool gain = name.find("gain") != std::string::npos ||
                      (name == "post.weight" && m.rows() == 1);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>((gain ? 1.0 : 0.0) + nd(rng));
  });
}

}  // namespace testutil
