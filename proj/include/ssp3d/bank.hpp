#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ssp3d/errors.hpp"
#include "ssp3d/voxel.hpp"

namespace ssp3d {

// Per-category cluster-center shape priors. Entries are kept in canonical
// order (category name, cluster index); the 3D-encoder tokens for these
// voxels are recomputed from current generator parameters wherever needed.
struct PrototypeBank {
  struct Entry {
    std::string category;
    int cluster_index = 0;
    BinaryVoxelGrid voxel;
  };

  std::vector<Entry> entries;
  int k = 0;

  std::size_t size() const { return entries.size(); }

  void sort_canonical() {
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.category != b.category) return a.category < b.category;
      return a.cluster_index < b.cluster_index;
    });
  }

  void validate() const {
    if (entries.empty()) throw DataError("PrototypeBank: empty bank");
    for (const auto& e : entries) {
      e.voxel.validate();
      if (e.voxel.count_occupied() == 0)
        throw DataError("PrototypeBank: empty prototype voxel for category " + e.category);
    }
  }
};

// Bank directory layout: index.tsv with "category<TAB>cluster<TAB>file" lines
// plus one VOXL file per prototype.
inline void save_bank(const PrototypeBank& bank, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream idx(dir + "/index.tsv");
  if (!idx) throw DataError("save_bank: cannot open " + dir + "/index.tsv");
  idx << "k\t" << bank.k << "\n";
  for (const auto& e : bank.entries) {
    const std::string file = e.category + "_" + std::to_string(e.cluster_index) + ".voxl";
    write_voxl(e.voxel, dir + "/" + file);
    idx << e.category << "\t" << e.cluster_index << "\t" << file << "\n";
  }
}

inline PrototypeBank load_bank(const std::string& dir) {
  std::ifstream idx(dir + "/index.tsv");
  if (!idx) throw DataError("load_bank: cannot open " + dir + "/index.tsv");
  PrototypeBank bank;
  std::string line;
  if (!std::getline(idx, line) || line.rfind("k\t", 0) != 0)
    throw DataError("load_bank: malformed index header in " + dir);
  bank.k = std::stoi(line.substr(2));
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    PrototypeBank::Entry e;
    std::string file;
    if (!std::getline(ss, e.category, '\t')) throw DataError("load_bank: malformed line");
    std::string ci;
    if (!std::getline(ss, ci, '\t') || !std::getline(ss, file, '\t'))
      throw DataError("load_bank: malformed line");
    e.cluster_index = std::stoi(ci);
    auto g = read_voxl(dir + "/" + file);
    if (!std::holds_alternative<BinaryVoxelGrid>(g))
      throw DataError("load_bank: prototype " + file + " is not a binary grid");
    e.voxel = std::get<BinaryVoxelGrid>(g);
    bank.entries.push_back(std::move(e));
  }
  bank.sort_canonical();
  bank.validate();
  return bank;
}

}  // namespace ssp3d
