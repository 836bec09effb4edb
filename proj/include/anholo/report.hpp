#pragma once

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace anholo::cli {

/// Raised when an output path cannot be created or written.  The driver maps
/// it to the usage/IO exit code.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form of a double, locale-independent.
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// RFC-4180 CSV accumulator: comma separator, '.' decimal point, LF record
/// ends, quoting only when a field needs it.
class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ += ',';
      out_ += quoted(header[i]);
    }
    out_ += '\n';
  }

  Csv& cell(const std::string& s) {
    sep();
    out_ += quoted(s);
    return *this;
  }
  Csv& cell(double x) {
    sep();
    out_ += format_double(x);
    return *this;
  }
  Csv& cell(long x) {
    sep();
    out_ += std::to_string(x);
    return *this;
  }
  Csv& cell(std::size_t x) {
    sep();
    out_ += std::to_string(x);
    return *this;
  }
  void end_row() {
    out_ += '\n';
    at_start_ = true;
  }

  const std::string& str() const { return out_; }

 private:
  void sep() {
    if (!at_start_) out_ += ',';
    at_start_ = false;
  }
  static std::string quoted(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    q += '"';
    return q;
  }
  std::string out_;
  bool at_start_ = true;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

/// Accumulates residuals, constants, and artifacts for one command run and
/// serializes them deterministically.  Status is pass unless a gated residual
/// exceeds its tolerance or a hard failure was recorded; warnings downgrade
/// pass to warn.
class Report {
 public:
  Report(std::string command, std::string scene, std::string digest,
         std::uint64_t seed)
      : command_(std::move(command)),
        scene_(std::move(scene)),
        digest_(std::move(digest)),
        seed_(seed) {}

  void set_tolerance(const std::string& name, double tol) {
    tolerances_.emplace_back(name, tol);
  }

  /// A named residual with its max/mean over samples.  Gated residuals
  /// require a tolerance of the same name and decide the status.
  void add_residual(const std::string& name, double mx, double mean,
                    bool gated = true) {
    residuals_.push_back({name, mx, mean, gated});
  }

  void add_constant(const std::string& name, double value) {
    constants_.emplace_back(name, nlohmann::ordered_json(value));
  }
  void add_constant(const std::string& name, const std::string& value) {
    constants_.emplace_back(name, nlohmann::ordered_json(value));
  }

  void add_artifact(const std::string& file) { artifacts_.push_back(file); }
  void add_warning(const std::string& msg) { warnings_.push_back(msg); }

  /// Record an unconditional failure (degenerate input, blow-up, ...).
  void hard_fail(const std::string& code) { error_ = code; }

  std::string status() const {
    if (!error_.empty()) return "fail";
    for (const auto& r : residuals_) {
      if (!r.gated) continue;
      if (r.max > tolerance_of(r.name)) return "fail";
    }
    return warnings_.empty() ? "pass" : "warn";
  }

  int exit_code() const { return status() == "fail" ? 2 : 0; }

  std::string json() const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["scene"] = scene_;
    j["inputs_digest"] = "fnv1a64:" + digest_;
    j["seed"] = seed_;
    auto tols = nlohmann::ordered_json::object();
    for (const auto& [name, tol] : tolerances_) tols[name] = tol;
    j["tolerances"] = tols;
    auto res = nlohmann::ordered_json::object();
    for (const auto& r : residuals_)
      res[r.name] = {{"max", r.max}, {"mean", r.mean}, {"gated", r.gated}};
    j["residuals"] = res;
    auto cons = nlohmann::ordered_json::object();
    for (const auto& [name, val] : constants_) cons[name] = val;
    j["constants"] = cons;
    j["status"] = status();
    if (!error_.empty()) j["error"] = error_;
    j["artifacts"] = artifacts_;
    j["warnings"] = warnings_;
    return j.dump(2) + "\n";
  }

 private:
  struct Residual {
    std::string name;
    double max = 0.0;
    double mean = 0.0;
    bool gated = true;
  };

  double tolerance_of(const std::string& name) const {
    for (const auto& [n, t] : tolerances_)
      if (n == name) return t;
    throw std::logic_error("report: gated residual '" + name + "' has no tolerance");
  }

  std::string command_, scene_, digest_;
  std::uint64_t seed_;
  std::vector<std::pair<std::string, double>> tolerances_;
  std::vector<Residual> residuals_;
  std::vector<std::pair<std::string, nlohmann::ordered_json>> constants_;
  std::vector<std::string> artifacts_;
  std::vector<std::string> warnings_;
  std::string error_;
};

}  // namespace anholo::cli
