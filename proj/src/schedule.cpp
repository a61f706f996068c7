#include "fiadla/schedule.hpp"

#include <algorithm>
#include <ostream>

namespace fiadla {

double ScheduleResult::overhead_per_iteration() const {
  if (iterations <= 0) return 0.0;
  const double base = static_cast<double>(iterations) * static_cast<double>(iteration_cycles);
  return (static_cast<double>(total_cycles) - base) / static_cast<double>(iterations);
}

ScheduleResult event_simulate_schedule(int col, int fault_pe_num, int dppu_size, int c, int k,
                                       int iterations, std::vector<ScheduleTraceRow>* trace) {
  ScheduleResult result;
  const std::uint64_t t_iter = static_cast<std::uint64_t>(c) * k * k;
  result.iterations = iterations;
  result.iteration_cycles = static_cast<std::int64_t>(t_iter);
  if (iterations <= 0 || t_iter == 0) return result;
  const auto f = static_cast<std::uint64_t>(std::max(fault_pe_num, 0));
  if (f > 0 && dppu_size <= 0) {
    result.feasible = false;
    return result;
  }
  const auto lanes = static_cast<std::uint64_t>(std::max(dppu_size, 0));
  const std::uint64_t depth = 2 * lanes;
  const std::uint64_t total_slices = t_iter * static_cast<std::uint64_t>(iterations);
  const std::uint64_t total_macs = total_slices * f;
  const std::uint64_t limit =
      total_slices * (lanes > 0 ? (f + lanes - 1) / lanes + 2 : 2) + 1024;

  std::uint64_t streamed = 0;
  std::uint64_t macs_done = 0;
  std::uint64_t dppu_iterations = 0;
  std::uint64_t array_writes = 0;
  std::uint64_t dppu_writes = 0;
  std::uint64_t cycle = 0;

  while (streamed < total_slices || macs_done < total_macs) {
    ArrayPhase phase = ArrayPhase::kTail;
    if (streamed < total_slices) {
      const std::uint64_t retired = f > 0 ? macs_done / f : streamed;
      if (f == 0 || streamed - retired < depth) {
        phase = ArrayPhase::kCompute;
        if (++streamed % t_iter == 0) array_writes += static_cast<std::uint64_t>(col);
      } else {
        phase = ArrayPhase::kStall;
        ++result.array_stall_cycles;
      }
    }
    if (f > 0) {
      macs_done += std::min(lanes, streamed * f - macs_done);
      while (dppu_iterations < static_cast<std::uint64_t>(iterations) &&
             macs_done >= (dppu_iterations + 1) * t_iter * f) {
        ++dppu_iterations;
        dppu_writes += f;
      }
    }
    PortOwner owner = PortOwner::kIdle;
    if (array_writes > 0) {
      --array_writes;
      owner = PortOwner::kArray;
    } else if (dppu_writes > 0) {
      --dppu_writes;
      owner = PortOwner::kDppu;
    }
    result.max_port_backlog = std::max(result.max_port_backlog, array_writes + dppu_writes);
    if (trace) trace->push_back({cycle, phase, owner});
    if (++cycle > limit) {
      result.feasible = false;
      break;
    }
  }
  result.total_cycles = cycle;
  result.port_oversubscribed =
      result.max_port_backlog > static_cast<std::uint64_t>(std::max(col, 0)) + 2 * f;
  return result;
}

void write_schedule_trace_csv(std::ostream& out, const std::vector<ScheduleTraceRow>& trace) {
  out << "cycle,phase,port_owner\n";
  for (const auto& row : trace) {
    const char* phase = row.phase == ArrayPhase::kCompute ? "compute"
                        : row.phase == ArrayPhase::kStall ? "stall"
                                                          : "tail";
    const char* owner = row.port == PortOwner::kArray  ? "array"
                        : row.port == PortOwner::kDppu ? "dppu"
                                                       : "idle";
    out << row.cycle << ',' << phase << ',' << owner << '\n';
  }
}

}  // namespace fiadla
