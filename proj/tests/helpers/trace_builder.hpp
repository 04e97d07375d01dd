#pragma once

#include <string>

#include "deer/types.hpp"

namespace deer::testing {

// Scripts a dynamic execution, record by record. The caller drives control
// flow; the builder only fills in seq numbers and flags.
struct TraceBuilder {
  Trace trace;
  u64 seq = 0;

  explicit TraceBuilder(std::string name = "fixture") {
    trace.meta.name = std::move(name);
    trace.meta.instruction_size = 4;
    trace.meta.cacheline_size = 64;
  }

  TraceBuilder& step(Addr pc) {
    trace.records.push_back(InstructionRecord::plain(seq++, pc));
    return *this;
  }
  // n sequential plain instructions starting at pc
  TraceBuilder& run(Addr pc, int n) {
    for (int i = 0; i < n; ++i) step(pc + static_cast<Addr>(i) * 4);
    return *this;
  }
  TraceBuilder& call(Addr pc, Addr target) {
    trace.records.push_back(InstructionRecord::make_call(seq++, pc, target));
    return *this;
  }
  TraceBuilder& icall(Addr pc, Addr target) {
    trace.records.push_back(InstructionRecord::make_call(seq++, pc, target, true));
    return *this;
  }
  TraceBuilder& ret(Addr pc, Addr target) {
    trace.records.push_back(InstructionRecord::make_return(seq++, pc, target));
    return *this;
  }
  TraceBuilder& br(Addr pc, Addr target, bool taken) {
    trace.records.push_back(InstructionRecord::make_cond(seq++, pc, target, taken));
    return *this;
  }
  TraceBuilder& jmp(Addr pc, Addr target) {
    trace.records.push_back(InstructionRecord::make_jump(seq++, pc, target));
    return *this;
  }

  Trace build() {
    trace.meta.instruction_count = trace.records.size();
    return trace;
  }
};

// ---- shared fixtures ----

// Call topology: prelude calls main; main branches 60/40, both paths call g,
// g calls f, f returns; everything unwinds and the prelude loops.
//   HB1 main entry (other) -> HB2/HB7 (call g) -> HB3 g entry (call f)
//   -> HB4 f body (ret) -> HB5 g tail (ret) -> HB6 main tail (ret)
struct CallChainFixture {
  static constexpr Addr P0 = 0x1000, P1 = 0x1004;
  static constexpr Addr A = 0x40000000;                 // main (HB1)
  static constexpr Addr HB1 = A, HB2 = A + 20, HB6 = A + 36, HB7 = A + 64;
  static constexpr Addr CALL_G = A + 32;
  static constexpr Addr G = 0x40001000;                 // g (HB3)
  static constexpr Addr HB3 = G, HB5 = G + 12;
  static constexpr Addr F = 0x40002000;                 // f (HB4)
  static constexpr Addr HB4 = F;

  // taken_iters: which prelude iterations take the 40% path
  static Trace trace(int iterations = 5) {
    TraceBuilder b("callchain");
    for (int it = 0; it < iterations; ++it) {
      bool alt = (it % 5 == 1 || it % 5 == 3);  // 2 of 5 -> 0.4
      b.call(P0, A);
      b.run(A, 4);
      b.br(A + 16, HB7, alt);
      if (alt)
        b.run(HB7, 2).jmp(HB7 + 8, CALL_G);
      else
        b.run(HB2, 3);
      b.call(CALL_G, G);
      b.run(G, 2);
      b.call(G + 8, F);
      b.run(F, 3);
      b.ret(F + 12, HB5);
      b.run(HB5, 2);
      b.ret(G + 20, HB6);
      b.run(HB6, 2);
      b.ret(A + 44, P1);
      b.jmp(P1, P0);
    }
    return b.build();
  }
};

// A 30-instruction loop run for exactly 10 iterations per call, followed by a
// short post-loop tail. The loop entry sits at L+8 so the back branch ends
// cacheline L+64 exactly and the tail starts on a fresh line at L+128.
struct LoopFixture {
  static constexpr Addr P0 = 0x1000, P1 = 0x1004;
  static constexpr Addr L = 0x40000000;
  static constexpr Addr ENTRY = L + 8;              // call target, loop header
  static constexpr Addr BACK_BRANCH = ENTRY + 29 * 4;  // 30th instruction, L+124
  static constexpr Addr POST = L + 128;
  static constexpr Addr RET_PC = POST + 2 * 4;      // post: 2 plain + ret

  static Trace trace(int calls = 5, int loop_iters = 10) {
    TraceBuilder b("loopnest");
    for (int c = 0; c < calls; ++c) {
      b.call(P0, ENTRY);
      for (int i = 0; i < loop_iters; ++i) {
        b.run(ENTRY, 29);
        b.br(BACK_BRANCH, ENTRY, i + 1 < loop_iters);
      }
      b.run(POST, 2);
      b.ret(RET_PC, P1);
      b.jmp(P1, P0);
    }
    return b.build();
  }
};

// Self-recursive function with a depth guard: two recursive descents, then
// the base case, then a full unwind. Exercises call-graph SCC detection.
struct RecursionFixture {
  static constexpr Addr P0 = 0x1000, P1 = 0x1004;
  static constexpr Addr R = 0x40000000;
  static constexpr Addr GUARD = R + 4;
  static constexpr Addr CALL_SELF = R + 8;
  static constexpr Addr CONT = R + 12;   // return lands here
  static constexpr Addr RET_PC = R + 16;
  static constexpr Addr BASE = R + 32;
  static constexpr Addr BASE_RET = R + 36;

  static Trace trace(int calls = 5, int depth = 3) {
    TraceBuilder b("recursion");
    for (int c = 0; c < calls; ++c) {
      b.call(P0, R);
      descend(b, depth, P1);
      b.jmp(P1, P0);
    }
    return b.build();
  }

 private:
  static void descend(TraceBuilder& b, int remaining, Addr ret_to) {
    b.step(R);
    if (remaining > 1) {
      b.br(GUARD, BASE, false);
      b.call(CALL_SELF, R);
      descend(b, remaining - 1, CONT);
      b.step(CONT);
      b.ret(RET_PC, ret_to);
    } else {
      b.br(GUARD, BASE, true);
      b.step(BASE);
      b.ret(BASE_RET, ret_to);
    }
  }
};

// Straight-line function of `fn_lines` cachelines called twice with a
// straight-line filler in between that evicts it from a small L2.
struct TwoPassFixture {
  static constexpr Addr P0 = 0x1000;
  static constexpr Addr FN = 0x40000000;
  static constexpr Addr FILLER = 0x40100000;

  static Trace trace(int fn_lines = 16, int filler_lines = 96) {
    TraceBuilder b("twopass");
    const int fn_instrs = fn_lines * 16;
    const int filler_instrs = filler_lines * 16;
    Addr call2 = FILLER + static_cast<Addr>(filler_instrs) * 4;
    b.call(P0, FN);
    b.run(FN, fn_instrs - 1);
    b.ret(FN + static_cast<Addr>(fn_instrs - 1) * 4, P0 + 4);
    b.run(P0 + 4, 1);
    b.jmp(P0 + 8, FILLER);
    b.run(FILLER, filler_instrs);
    b.call(call2, FN);
    b.run(FN, fn_instrs - 1);
    b.ret(FN + static_cast<Addr>(fn_instrs - 1) * 4, call2 + 4);
    b.run(call2 + 4, 2);
    return b.build();
  }
};

}  // namespace deer::testing
