#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sac/common.hpp"

namespace sac {

using json = nlohmann::json;

enum class Split { train, val, test, zeroshot };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::zeroshot: return "zeroshot";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "zeroshot") return Split::zeroshot;
  throw Error(Errc::parse, "unknown split '" + s + "'");
}

struct ManifestEntry {
  std::string image;
  std::string mask;
};

// Explicit (image, mask) pairing for one dataset split. Paths are stored as
// written in the file and resolved against the manifest's directory.
struct DatasetManifest {
  std::string name;
  Split split = Split::train;
  std::vector<ManifestEntry> entries;
  std::string base_dir;  // directory of the manifest file, "" for in-memory

  std::string resolve(const std::string& p) const {
    std::filesystem::path fp(p);
    if (fp.is_absolute() || base_dir.empty()) return p;
    return (std::filesystem::path(base_dir) / fp).string();
  }

  size_t size() const { return entries.size(); }
};

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }

  DatasetManifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  try {
    m.name = j.at("name").get<std::string>();
    m.split = parse_split(j.at("split").get<std::string>());
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      bool has_image = je.contains("image") && !je.at("image").get<std::string>().empty();
      bool has_mask = je.contains("mask") && !je.at("mask").get<std::string>().empty();
      if (has_image != has_mask) {
        std::string orphan = has_image ? je.at("image").get<std::string>() : je.at("mask").get<std::string>();
        throw Error(Errc::pairing, "entry pairs no " + std::string(has_image ? "mask" : "image") +
                                       " with '" + orphan + "' in " + path);
      }
      require(has_image, Errc::pairing, "entry with neither image nor mask in " + path);
      e.image = je.at("image").get<std::string>();
      e.mask = je.at("mask").get<std::string>();
      m.entries.push_back(std::move(e));
    }
    if (j.contains("declared_size")) {
      auto declared = j.at("declared_size").get<std::int64_t>();
      require(declared == static_cast<std::int64_t>(m.entries.size()), Errc::consistency,
              strf("manifest %s declares %lld entries but lists %zu", path.c_str(),
                   static_cast<long long>(declared), m.entries.size()));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path + ": " + e.what());
  }

  for (const auto& e : m.entries) {
    require(std::filesystem::exists(m.resolve(e.image)), Errc::io,
            "manifest " + path + " references missing image " + e.image);
    require(std::filesystem::exists(m.resolve(e.mask)), Errc::io,
            "manifest " + path + " references missing mask " + e.mask);
  }
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  json j;
  j["name"] = m.name;
  j["split"] = split_name(m.split);
  j["declared_size"] = m.entries.size();
  j["entries"] = json::array();
  for (const auto& e : m.entries) j["entries"].push_back({{"image", e.image}, {"mask", e.mask}});
  std::ofstream out(path);
  require(out.good(), Errc::output, "cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

}  // namespace sac
