// SPDX-License-Identifier: Apache-2.0

#include "dreammap/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace dreammap {

namespace {

Unit parse_unit(const std::string& token) {
  if (token == "dbm") return Unit::dBm;
  if (token == "norm") return Unit::Normalized;
  throw DataError("map file: unknown unit '" + token + "'");
}

double parse_value(const std::string& token) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw DataError("map file: bad value token '" + token + "'");
  if (!std::isfinite(v)) throw DataError("map file: non-finite value token");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void save_map(const std::filesystem::path& path, const GridMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("save_map: cannot open " + path.string());
  out << "REMAP v1\n" << map.height() << ' ' << map.width() << ' '
      << unit_name(map.unit()) << '\n';
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      if (c) out << ' ';
      out << format_double(map(r, c));
    }
    out << '\n';
  }
  if (!out) throw DataError("save_map: write failed for " + path.string());
}

GridMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_map: cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || line != "REMAP v1")
    throw DataError("load_map: malformed header in " + path.string());

  if (!std::getline(in, line))
    throw DataError("load_map: missing dimension line in " + path.string());
  std::istringstream dims(line);
  long long h = 0, w = 0;
  std::string unit_token, extra;
  if (!(dims >> h >> w >> unit_token) || (dims >> extra) || h < 1 || w < 1)
    throw DataError("load_map: malformed dimension line in " + path.string());
  const Unit unit = parse_unit(unit_token);

  GridMap::Vec values(h * w);
  Eigen::Index count = 0;
  std::string token;
  while (in >> token) {
    if (count >= values.size())
      throw DataError("load_map: too many values in " + path.string());
    values[count++] = parse_value(token);
  }
  if (count != values.size())
    throw DataError("load_map: expected " + std::to_string(values.size()) +
                    " values, got " + std::to_string(count) + " in " + path.string());
  return GridMap(static_cast<int>(h), static_cast<int>(w), std::move(values), unit);
}

void save_pair(const std::filesystem::path& json_path, const EnvironmentPair& pair) {
  validate(pair);
  const std::string stem = json_path.stem().string();
  const std::string empty_name = stem + "_empty.map";
  const std::string occupied_name = stem + "_occupied.map";
  const auto dir = json_path.parent_path();

  save_map(dir / empty_name, pair.empty);
  save_map(dir / occupied_name, pair.occupied);

  nlohmann::json j;
  j["meta"] = {{"source", pair.meta.source},
               {"seed", pair.meta.seed},
               {"scale", pair.meta.scale},
               {"dbm_min", pair.meta.dbm_min},
               {"dbm_max", pair.meta.dbm_max}};
  j["empty"] = empty_name;
  j["occupied"] = occupied_name;

  std::ofstream out(json_path);
  if (!out) throw DataError("save_pair: cannot open " + json_path.string());
  out << j.dump(2) << '\n';
}

EnvironmentPair load_pair(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("load_pair: cannot open " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_pair: bad JSON in " + json_path.string() + ": " + e.what());
  }

  EnvironmentPair pair;
  try {
    const auto& meta = j.at("meta");
    pair.meta.source = meta.at("source").get<std::string>();
    pair.meta.seed = meta.at("seed").get<std::uint64_t>();
    pair.meta.scale = meta.at("scale").get<int>();
    pair.meta.dbm_min = meta.at("dbm_min").get<double>();
    pair.meta.dbm_max = meta.at("dbm_max").get<double>();
    const auto dir = json_path.parent_path();
    pair.empty = load_map(dir / j.at("empty").get<std::string>());
    pair.occupied = load_map(dir / j.at("occupied").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_pair: missing field in " + json_path.string() + ": " + e.what());
  }
  validate(pair);
  return pair;
}

}  // namespace dreammap
