#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tkcli {

using nlohmann::json;

/// Raised for any config that does not satisfy the schema (exit status 2).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads one JSON object. Every accessor records the value it returns
/// (default or given) in resolved(), and finish() rejects unread keys, so
/// resolved() alone reproduces the run.
class Params {
 public:
  Params(json in, std::string where) : in_(std::move(in)), where_(std::move(where)) {
    if (!in_.is_object()) throw SchemaError(where_ + ": expected an object");
  }

  double num(const std::string& key, double def) { return num_impl(key, &def); }
  double num(const std::string& key) { return num_impl(key, nullptr); }

  double positive(const std::string& key, double def) {
    const double v = num(key, def);
    if (!(v > 0)) throw SchemaError(path(key) + ": must be > 0");
    return v;
  }

  std::uint64_t count(const std::string& key, std::uint64_t def, std::uint64_t min = 0) {
    return count_impl(key, &def, min);
  }
  std::uint64_t count(const std::string& key) { return count_impl(key, nullptr, 0); }

  bool flag(const std::string& key, bool def) {
    used_.insert(key);
    bool v = def;
    if (in_.contains(key)) {
      if (!in_[key].is_boolean()) throw SchemaError(path(key) + ": expected a boolean");
      v = in_[key].get<bool>();
    }
    out_[key] = v;
    return v;
  }

  std::string choice(const std::string& key, const std::string& def,
                     const std::vector<std::string>& allowed) {
    used_.insert(key);
    std::string v = def;
    if (in_.contains(key)) {
      if (!in_[key].is_string()) throw SchemaError(path(key) + ": expected a string");
      v = in_[key].get<std::string>();
    }
    bool ok = false;
    for (const auto& a : allowed) ok = ok || a == v;
    if (!ok) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw SchemaError(path(key) + ": must be one of " + list);
    }
    out_[key] = v;
    return v;
  }

  std::vector<double> nums(const std::string& key, const std::vector<double>& def) {
    used_.insert(key);
    std::vector<double> v = def;
    if (in_.contains(key)) {
      const auto& a = in_[key];
      if (!a.is_array()) throw SchemaError(path(key) + ": expected an array of numbers");
      v.clear();
      for (const auto& e : a) {
        if (!e.is_number()) throw SchemaError(path(key) + ": expected an array of numbers");
        v.push_back(e.get<double>());
      }
    }
    out_[key] = v;
    return v;
  }

  std::vector<std::uint64_t> counts(const std::string& key, const std::vector<std::uint64_t>& def) {
    used_.insert(key);
    std::vector<std::uint64_t> v = def;
    if (in_.contains(key)) {
      const auto& a = in_[key];
      if (!a.is_array()) throw SchemaError(path(key) + ": expected an array of integers");
      v.clear();
      for (const auto& e : a) {
        if (!e.is_number_unsigned()) throw SchemaError(path(key) + ": expected an array of integers");
        v.push_back(e.get<std::uint64_t>());
      }
    }
    out_[key] = v;
    return v;
  }

  bool has(const std::string& key) const { return in_.contains(key); }

  /// Raw sub-value, validated by the caller; copied to resolved() verbatim.
  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!in_.contains(key)) throw SchemaError(path(key) + ": missing");
    out_[key] = in_[key];
    return in_[key];
  }

  /// Stores a nested resolved value (e.g. from a child Params).
  void set_resolved(const std::string& key, json v) {
    used_.insert(key);
    out_[key] = std::move(v);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, _] : in_.items())
      if (!used_.count(k)) throw SchemaError(where_ + ": unknown key '" + k + "'");
  }

  const json& resolved() const { return out_; }
  json& resolved() { return out_; }

 private:
  double num_impl(const std::string& key, const double* def) {
    used_.insert(key);
    double v;
    if (in_.contains(key)) {
      if (!in_[key].is_number()) throw SchemaError(path(key) + ": expected a number");
      v = in_[key].get<double>();
    } else if (def) {
      v = *def;
    } else {
      throw SchemaError(path(key) + ": missing");
    }
    if (!std::isfinite(v)) throw SchemaError(path(key) + ": must be finite");
    out_[key] = v;
    return v;
  }

  std::uint64_t count_impl(const std::string& key, const std::uint64_t* def, std::uint64_t min) {
    used_.insert(key);
    std::uint64_t v;
    if (in_.contains(key)) {
      if (!in_[key].is_number_unsigned()) throw SchemaError(path(key) + ": expected a non-negative integer");
      v = in_[key].get<std::uint64_t>();
    } else if (def) {
      v = *def;
    } else {
      throw SchemaError(path(key) + ": missing");
    }
    if (v < min) throw SchemaError(path(key) + ": must be >= " + std::to_string(min));
    out_[key] = v;
    return v;
  }

  json in_;
  std::string where_;
  json out_ = json::object();
  std::set<std::string> used_;
};

}  // namespace tkcli
