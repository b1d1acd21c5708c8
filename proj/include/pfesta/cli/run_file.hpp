#pragma once

#include <string>

#include "pfesta/protocol/config.hpp"
#include "pfesta/tasks/world.hpp"
#include "pfesta/util/keyvalue.hpp"

namespace pfesta::cli {

// Everything a run needs besides the output directory.
struct RunFile {
  protocol::RunConfig run;
  tasks::WorldConfig world;
  std::string constants;  // cost constants file for `costs`, may be empty
};

// The desk-scale world: two scanty classification clients that each miss one
// class, two severity clients and two segmentation clients.
RunFile default_run_file();

// Applies the document's keys on top of `base`. Setting `tasks` replaces the
// task list; task.<name>.* keys then edit the named tasks. Unknown keys and
// malformed values raise protocol::ConfigError naming the line.
RunFile apply(const util::KeyValueDoc& doc, RunFile base = default_run_file());

// Every key, in a form apply() reads back to an identical RunFile.
std::string to_text(const RunFile& file);

// Keeps `n` clients per task, repeating the last size (and class weights)
// when growing.
void set_clients_per_task(RunFile& file, std::size_t n);

}  // namespace pfesta::cli
