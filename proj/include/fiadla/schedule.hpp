#pragma once

// Cycle-level simulation of the HCA recompute pipeline, used as an
// independent check of the closed-form stall and penalty expressions.
//
// Model, per cycle:
//  * the 2D array streams one operand slice (one step of the c*k*k reduction)
//    unless the ping-pong weight register file is full; the file holds the
//    slices the DPPU has not finished with, 2 * dppu_size deep;
//  * the DPPU retires up to dppu_size multiply-accumulates from the faulty
//    outputs' pending work, in stream order (a slice streamed this cycle is
//    already visible);
//  * the output-buffer port performs one write: a finished iteration queues
//    Col column writes (highest priority), a finished DPPU iteration queues
//    one write per recomputed output.
// Total cycles count until both the array and the DPPU finish their last
// iteration; the final write-back drain is excluded (steady-state model).

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace fiadla {

enum class PortOwner : std::uint8_t { kIdle, kArray, kDppu };
// kTail: the array has streamed everything and waits for the DPPU.
enum class ArrayPhase : std::uint8_t { kCompute, kStall, kTail };

struct ScheduleTraceRow {
  std::uint64_t cycle = 0;
  ArrayPhase phase = ArrayPhase::kCompute;
  PortOwner port = PortOwner::kIdle;
};

struct ScheduleResult {
  bool feasible = true;
  std::uint64_t total_cycles = 0;
  std::uint64_t array_stall_cycles = 0;
  std::uint64_t max_port_backlog = 0;
  // More writes pending than the ping-pong result registers and one round of
  // column writes can hold.
  bool port_oversubscribed = false;
  std::int64_t iterations = 0;
  std::int64_t iteration_cycles = 0;

  double overhead_per_iteration() const;
};

ScheduleResult event_simulate_schedule(int col, int fault_pe_num, int dppu_size, int c, int k,
                                       int iterations,
                                       std::vector<ScheduleTraceRow>* trace = nullptr);

// CSV: cycle,phase,port_owner
void write_schedule_trace_csv(std::ostream& out, const std::vector<ScheduleTraceRow>& trace);

}  // namespace fiadla
