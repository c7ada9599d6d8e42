// SPDX-License-Identifier: Apache-2.0
#include "uotlab/run_record.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace uotlab {

namespace {
constexpr const char* kSchemaComment = "# uotlab run record v1";
constexpr const char* kHeader = "iter,dual_loss,gen_loss,region_hit_rate,clamp_count,pul,frechet_retain,oos_mass";
}  // namespace

void write_run_record_csv(const std::string& path, const std::vector<RunRecordRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(strf("write_run_record_csv: cannot open '%s'", path.c_str()));
  out << kSchemaComment << "\n" << kHeader << "\n";
  for (const auto& r : rows) {
    out << strf("%ld,%.10g,%.10g,%.10g,%ld,%.10g,%.10g,%.10g\n", r.iter, r.dual_loss, r.gen_loss,
                r.region_hit_rate, r.clamp_count, r.pul, r.frechet_retain, r.oos_mass);
  }
  if (!out) throw Error(strf("write_run_record_csv: write failed for '%s'", path.c_str()));
}

std::vector<RunRecordRow> read_run_record_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(strf("read_run_record_csv: cannot open '%s'", path.c_str()));
  std::vector<RunRecordRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("iter,", 0) == 0) continue;
    RunRecordRow r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%ld,%lf,%lf,%lf", &r.iter, &r.dual_loss, &r.gen_loss,
                    &r.region_hit_rate, &r.clamp_count, &r.pul, &r.frechet_retain, &r.oos_mass) != 8) {
      throw Error(strf("read_run_record_csv: malformed line '%s'", line.c_str()));
    }
    rows.push_back(r);
  }
  return rows;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(strf("hash_file: cannot open '%s'", path.c_str()));
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return h;
}

void write_manifest(const std::string& dir, const std::string& experiment, const std::string& subcommand,
                    uint64_t config_hash, uint64_t master_seed,
                    const std::vector<std::string>& artifact_files) {
  nlohmann::json manifest;
  manifest["experiment"] = experiment;
  manifest["subcommand"] = subcommand;
  manifest["config_hash"] = strf("%016llx", static_cast<unsigned long long>(config_hash));
  manifest["master_seed"] = master_seed;
  manifest["code_version"] = kCodeVersion;
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto& file : artifact_files) {
    const std::filesystem::path full = std::filesystem::path(dir) / file;
    artifacts[file] = strf("%016llx", static_cast<unsigned long long>(hash_file(full.string())));
  }
  manifest["artifacts"] = artifacts;
  std::ofstream out(std::filesystem::path(dir) / "manifest.json", std::ios::trunc);
  if (!out) throw Error(strf("write_manifest: cannot open manifest in '%s'", dir.c_str()));
  out << manifest.dump(2) << "\n";
}

}  // namespace uotlab
