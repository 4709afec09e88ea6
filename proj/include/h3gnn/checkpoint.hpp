#pragma once

#include <string>
#include <utility>
#include <vector>

#include "h3gnn/tensor.hpp"

namespace h3gnn {

// Tensor archive, format version 1:
//   text header   "h3ar 1\n" then one "<name> <rows> <cols>\n" line per
//                 tensor, terminated by "data\n"
//   binary body   row-major float64 little-endian blobs, in header order
class TensorArchive {
  public:
    void put(const std::string& name, const Tensor& t);
    bool has(const std::string& name) const;
    Tensor get(const std::string& name) const;  // throws StateError when absent
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static TensorArchive load(const std::string& path);

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

struct EncoderParams;
struct EncoderConfig;

// Encoder parameters under "<prefix>.<name>"; shapes are validated on read.
void archive_params(TensorArchive& ar, const std::string& prefix, const EncoderParams& params);
EncoderParams params_from_archive(const TensorArchive& ar, const std::string& prefix,
                                  const EncoderConfig& cfg, bool requires_grad = false);

// Encoder hyperparameters as 1x1 meta tensors ("meta.token_dim", ...).
void archive_encoder_config(TensorArchive& ar, const EncoderConfig& cfg);
EncoderConfig encoder_config_from_archive(const TensorArchive& ar);

}  // namespace h3gnn
