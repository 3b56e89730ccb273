#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/rl.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::rl {

std::string format_checkpoint(const Checkpoint& cp) {
  const auto d = cp.model.theta.size();
  if (cp.rls.delta.rows() != d || cp.rls.delta.cols() != d) {
    throw ValidationError("checkpoint: theta and Delta sizes differ");
  }
  std::string out;
  out += "# value model checkpoint\n";
  out += "schema_version = 1\n";
  out += fmt::format("mgs = {}\n", cp.model.mgs);
  out += fmt::format("phi = {}\n", cp.rls.phi);
  out += fmt::format("mu = {}\n", cp.rls.mu);
  out += fmt::format("delta0 = {}\n", cp.rls.delta0);
  out += fmt::format("resets = {}\n", cp.rls.resets);
  out += "\n[theta]\n";
  for (Eigen::Index i = 0; i < d; ++i) out += text::fmt_double(cp.model.theta[i]) + "\n";
  out += "\n[delta]\n";
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (j) out += ' ';
      out += text::fmt_double(cp.rls.delta(i, j));
    }
    out += '\n';
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& content, const std::string& origin) {
  const auto doc = text::parse(content, origin);
  doc.require_schema(1);
  Checkpoint cp;
  const auto mgs = text::to_int(doc.str("mgs"), origin + ": mgs");
  if (mgs < 1) throw ValidationError(origin + ": mgs must be >= 1");
  cp.model = ValueModel::zeros(static_cast<int>(mgs));
  const int d = feature_dim(static_cast<int>(mgs));

  const auto& theta = doc.section("theta");
  if (static_cast<int>(theta.size()) != d) {
    throw ValidationError(fmt::format("{}: [theta] has {} rows, expected {}", origin, theta.size(), d));
  }
  for (int i = 0; i < d; ++i) {
    const auto& row = theta[i];
    if (row.cells.size() != 1) throw ValidationError(fmt::format("{}:{}: expected one value", origin, row.line));
    cp.model.theta[i] = text::to_double(row.cells[0], fmt::format("{}:{}", origin, row.line));
  }

  const auto& delta = doc.section("delta");
  if (static_cast<int>(delta.size()) != d) {
    throw ValidationError(fmt::format("{}: [delta] has {} rows, expected {}", origin, delta.size(), d));
  }
  cp.rls.delta.resize(d, d);
  for (int i = 0; i < d; ++i) {
    const auto& row = delta[i];
    if (static_cast<int>(row.cells.size()) != d) {
      throw ValidationError(fmt::format("{}:{}: expected {} values", origin, row.line, d));
    }
    for (int j = 0; j < d; ++j) cp.rls.delta(i, j) = text::to_double(row.cells[j], fmt::format("{}:{}", origin, row.line));
  }
  cp.rls.phi = doc.number("phi");
  cp.rls.mu = doc.number("mu");
  cp.rls.delta0 = doc.number("delta0");
  cp.rls.resets = static_cast<int>(text::to_int(doc.str_or("resets", "0"), origin + ": resets"));
  cp.rls.validate();
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) { text::write_file(path, format_checkpoint(cp)); }

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(text::read_file(path), path); }

}  // namespace gridcoop::rl
