#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "difftad/autodiff.hpp"

namespace difftad {

// Named parameter matrices in a fixed registration order. The order defines
// initialization, optimizer state layout and checkpoint block order.
class ParamStore {
 public:
  Eigen::MatrixXd& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Eigen::MatrixXd& get(const std::string& name);
  const Eigen::MatrixXd& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }
  std::size_t total_scalars() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, Eigen::MatrixXd> index_;
};

// Copies every parameter of src into dst by name. The stores must agree on
// the full name set and all shapes.
void load_params(ParamStore& dst, const ParamStore& src);

// Binds parameters of one store onto one tape, at most once each, so a graph
// can be built incrementally and gradients read back per parameter.
class Binder {
 public:
  Binder(ad::Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

  ad::Tape& tape() { return *tape_; }
  const ParamStore& store() const { return *store_; }

  ad::Var operator()(const std::string& name);

  // Gradient of a parameter after backward(); zero if it never entered the
  // graph.
  Eigen::MatrixXd grad(const std::string& name) const;

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  std::map<std::string, int> bound_;
};

}  // namespace difftad
