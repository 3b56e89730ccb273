#include <fmt/format.h>

#include "gridcoop/errors.hpp"
#include "gridcoop/grid.hpp"
#include "gridcoop/text.hpp"

namespace gridcoop::grid {

namespace {

std::string where(const text::Document& doc, const text::Row& row) {
  return fmt::format("{}:{}", doc.origin, row.line);
}

}  // namespace

NetworkModel parse_network(const std::string& content, const std::string& origin) {
  const auto doc = text::parse(content, origin);
  doc.require_schema(1);
  NetworkModel net;
  net.name = doc.str_or("name", "network");
  net.base_kva = doc.number("base_kva");
  net.base_kv = doc.number("base_kv");
  for (const auto& row : doc.section("buses")) {
    const auto loc = where(doc, row);
    if (row.cells.size() != 4 && row.cells.size() != 6) {
      throw ValidationError(loc + ": bus row needs 'id type vmin vmax [load_kw load_kvar]'");
    }
    Bus bus;
    bus.id = static_cast<int>(text::to_int(row.cells[0], loc));
    if (row.cells[1] == "slack") {
      bus.type = BusType::slack;
    } else if (row.cells[1] == "pq") {
      bus.type = BusType::pq;
    } else {
      throw ValidationError(loc + ": bus type must be 'slack' or 'pq'");
    }
    bus.v_min = text::to_double(row.cells[2], loc);
    bus.v_max = text::to_double(row.cells[3], loc);
    if (row.cells.size() == 6) {
      bus.load_kw = text::to_double(row.cells[4], loc);
      bus.load_kvar = text::to_double(row.cells[5], loc);
    }
    net.buses.push_back(bus);
  }
  for (const auto& row : doc.section("branches")) {
    const auto loc = where(doc, row);
    if (row.cells.size() != 5) throw ValidationError(loc + ": branch row needs 'from to r x rating'");
    Branch br;
    br.from = static_cast<int>(text::to_int(row.cells[0], loc));
    br.to = static_cast<int>(text::to_int(row.cells[1], loc));
    br.r = text::to_double(row.cells[2], loc);
    br.x = text::to_double(row.cells[3], loc);
    br.rating = text::to_double(row.cells[4], loc);
    net.branches.push_back(br);
  }
  net.validate();
  return net;
}

NetworkModel load_network(const std::string& path) { return parse_network(text::read_file(path), path); }

std::string format_network(const NetworkModel& network) {
  std::string out = "schema_version = 1\n";
  out += fmt::format("name = {}\nbase_kva = {}\nbase_kv = {}\n\n[buses]\n# id type vmin vmax load_kw load_kvar\n",
                     network.name, network.base_kva, network.base_kv);
  for (const auto& b : network.buses) {
    out += fmt::format("{} {} {} {} {} {}\n", b.id, b.type == BusType::slack ? "slack" : "pq", b.v_min, b.v_max,
                       b.load_kw, b.load_kvar);
  }
  out += "\n[branches]\n# from to r_pu x_pu rating_pu\n";
  for (const auto& br : network.branches) {
    out += fmt::format("{} {} {} {} {}\n", br.from, br.to, br.r, br.x, br.rating);
  }
  return out;
}

}  // namespace gridcoop::grid
