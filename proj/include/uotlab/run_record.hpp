// SPDX-License-Identifier: Apache-2.0
#ifndef UOTLAB_RUN_RECORD_HPP_
#define UOTLAB_RUN_RECORD_HPP_

#include <map>
#include <string>
#include <vector>

#include "uotlab/common.hpp"

namespace uotlab {

// One metrics row per evaluation checkpoint; schema shared by the UOT
// trainer and every baseline so runs compare column-for-column.
struct RunRecordRow {
  long iter = 0;
  double dual_loss = 0.0;
  double gen_loss = 0.0;
  double region_hit_rate = 0.0;
  long clamp_count = 0;
  double pul = 0.0;
  double frechet_retain = 0.0;
  double oos_mass = 0.0;
};

void write_run_record_csv(const std::string& path, const std::vector<RunRecordRow>& rows);
std::vector<RunRecordRow> read_run_record_csv(const std::string& path);

uint64_t hash_file(const std::string& path);

// manifest.json: config hash, seeds, code version and per-artifact content
// hashes; enough to re-derive the run.
void write_manifest(const std::string& dir, const std::string& experiment, const std::string& subcommand,
                    uint64_t config_hash, uint64_t master_seed,
                    const std::vector<std::string>& artifact_files);

}  // namespace uotlab

#endif  // UOTLAB_RUN_RECORD_HPP_
