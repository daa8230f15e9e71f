#include "difftad/params.hpp"

#include <stdexcept>

namespace difftad {

Eigen::MatrixXd& ParamStore::create(const std::string& name, Eigen::Index rows,
                                    Eigen::Index cols) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  }
  order_.push_back(name);
  auto [it, ok] = index_.emplace(name, Eigen::MatrixXd::Zero(rows, cols));
  return it->second;
}

Eigen::MatrixXd& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
  return it->second;
}

const Eigen::MatrixXd& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& name : order_) {
    const auto& m = index_.at(name);
    n += static_cast<std::size_t>(m.rows() * m.cols());
  }
  return n;
}

void load_params(ParamStore& dst, const ParamStore& src) {
  if (dst.count() != src.count()) {
    throw std::invalid_argument("load_params: parameter sets differ in size");
  }
  for (const auto& name : dst.names()) {
    const Eigen::MatrixXd& from = src.get(name);  // throws on missing name
    Eigen::MatrixXd& to = dst.get(name);
    if (from.rows() != to.rows() || from.cols() != to.cols()) {
      throw std::invalid_argument("load_params: shape mismatch for " + name);
    }
    to = from;
  }
}

ad::Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return ad::Var(tape_, it->second);
  int id = tape_->push(store_->get(name));
  bound_.emplace(name, id);
  return ad::Var(tape_, id);
}

Eigen::MatrixXd Binder::grad(const std::string& name) const {
  auto it = bound_.find(name);
  const Eigen::MatrixXd& v = store_->get(name);
  if (it == bound_.end()) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
  return tape_->gradient(it->second);
}

}  // namespace difftad
