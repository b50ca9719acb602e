// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points: compile transformer graphs, run programs on the
// simulator, assemble/disassemble, and emit the approximation / benchmark
// reports.

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "tataa/bfarith.hpp"
#include "tataa/compiler.hpp"
#include "tataa/errors.hpp"
#include "tataa/graph.hpp"
#include "tataa/isa.hpp"
#include "tataa/machine.hpp"
#include "tataa/refmodel.hpp"

using namespace tataa;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path);
  out << text;
}

void spit_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

machine::MachineConfig load_config(const std::string& path) {
  machine::MachineConfig c;
  if (path.empty()) return c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(path));
    c.cores = j.value("cores", c.cores);
    c.dmpus = j.value("dmpus", c.dmpus);
    c.pe_cols = j.value("pe_cols", c.pe_cols);
    c.pack = j.value("pack", c.pack);
    c.freq_mhz = j.value("freq_mhz", c.freq_mhz);
    c.d_mat = j.value("d_mat", c.d_mat);
    c.d_fpv = j.value("d_fpv", c.d_fpv);
    c.mem_latency = j.value("mem_latency", c.mem_latency);
    c.mem_bytes_per_cycle = j.value("mem_bytes_per_cycle", c.mem_bytes_per_cycle);
    c.load_ports = j.value("load_ports", c.load_ports);
    c.acc_bits = j.value("acc_bits", c.acc_bits);
    c.mem_bytes = j.value("mem_bytes", c.mem_bytes);
    c.watchdog_cycles = j.value("watchdog", c.watchdog_cycles);
    c.timing = j.value("timing", c.timing);
    c.arith.newton_iters = j.value("newton_iters", c.arith.newton_iters);
    c.arith.exp_frac_lut = j.value("exp_frac_lut", c.arith.exp_frac_lut);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

void print_config_header(std::ostream& os, const machine::MachineConfig& c) {
  os << "# config fingerprint " << compiler::config_fingerprint(c) << "\n"
     << "# cores=" << c.cores << " dmpus=" << c.dmpus << " pe_cols=" << c.pe_cols
     << " pack=" << c.pack << " freq_mhz=" << c.freq_mhz << " d_mat=" << c.d_mat
     << " d_fpv=" << c.d_fpv << "\n"
     << "# mem_latency=" << c.mem_latency << " mem_bytes_per_cycle=" << c.mem_bytes_per_cycle
     << " load_ports=" << c.load_ports << " acc_bits=" << c.acc_bits
     << " timing=" << (c.timing ? 1 : 0) << " newton_iters=" << c.arith.newton_iters
     << " exp_frac_lut=" << (c.arith.exp_frac_lut ? 1 : 0) << "\n";
}

void print_report(std::ostream& os, const machine::CycleReport& r) {
  os << "cycles " << r.total_cycles << "\n"
     << "instructions " << r.instructions << "\n"
     << "stall_cycles " << r.stall_cycles << "\n"
     << "mode_switches " << r.mode_switches << "\n"
     << "overlap_cycles_saved " << r.overlap_cycles_saved << "\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "gops_int8 %.2f\n", r.gops_int8);
  os << buf;
  std::snprintf(buf, sizeof buf, "gflops_bf16 %.2f\n", r.gflops_bf16);
  os << buf;
  std::snprintf(buf, sizeof buf, "gflops_theoretical %.2f\n", r.gflops_theoretical);
  os << buf;
  for (const auto& [op, cycles] : r.cycles_by_opcode)
    os << "cycles[" << op << "] " << cycles << "\n";
}

int cmd_compile(const std::string& graph_path, const std::string& config_path,
                const std::string& out_dir, int batch, bool no_double_buffer) {
  auto cfg = load_config(config_path);
  auto g = graph::parse_and_infer(slurp(graph_path));
  compiler::CompileOptions opt;
  opt.batch = batch;
  opt.double_buffer = !no_double_buffer;
  auto lp = compiler::compile(g, cfg, opt);
  for (size_t k = 0; k < lp.per_core.size(); ++k) {
    if (lp.per_core[k].size() <= 1 && k > 0) continue;  // idle core
    std::string name = out_dir + "/program_c" + std::to_string(k) + ".bin";
    isa::write_program(name, lp.per_core[k]);
    lp.manifest.program_files.push_back("program_c" + std::to_string(k) + ".bin");
  }
  spit_bytes(out_dir + "/memory.bin", lp.memory_image);
  spit(out_dir + "/manifest.json", compiler::manifest_to_json(lp.manifest));
  print_config_header(std::cout, cfg);
  std::cout << "programs " << lp.manifest.program_files.size() << "\n"
            << "instructions " << lp.stats.instructions << "\n"
            << "matmul_tiles " << lp.stats.matmul_tiles << "\n"
            << "image_bytes " << lp.memory_image.size() << "\n";
  return kExitOk;
}

int cmd_run(const std::string& manifest_path, const std::string& config_path,
            const std::string& trace_path, const std::string& out_dir, int64_t watchdog,
            int cores, int acc_bits, const std::vector<std::string>& dumps) {
  auto cfg = load_config(config_path);
  if (watchdog > 0) cfg.watchdog_cycles = watchdog;
  if (cores > 0) cfg.cores = cores;
  if (acc_bits > 0) cfg.acc_bits = acc_bits;
  auto m = compiler::manifest_from_json(slurp(manifest_path));
  std::string dir = manifest_path.substr(0, manifest_path.find_last_of('/') + 1);
  auto bytes = slurp(dir + "memory.bin");
  std::vector<uint8_t> memory(bytes.begin(), bytes.end());
  std::vector<std::vector<uint64_t>> programs;
  for (const auto& f : m.program_files) programs.push_back(isa::read_program(dir + f));
  std::vector<machine::TraceRow> trace;
  auto rep = machine::run(programs, memory, cfg, trace_path.empty() ? nullptr : &trace);
  if (!trace_path.empty()) spit(trace_path, machine::trace_to_csv(trace));
  if (!out_dir.empty()) spit_bytes(out_dir + "/memory.out.bin", memory);
  print_config_header(std::cout, cfg);
  print_report(std::cout, rep);
  for (const auto& d : dumps) {
    auto eq = d.find('=');
    std::string name = eq == std::string::npos ? d : d.substr(0, eq);
    std::string file = eq == std::string::npos ? name + ".txt" : d.substr(eq + 1);
    auto it = m.tensors.find(name);
    if (it == m.tensors.end()) throw RunError("dump: unknown tensor " + name);
    auto vals = compiler::read_tensor(memory, it->second);
    std::ostringstream os;
    for (double v : vals) os << v << "\n";
    spit(file, os.str());
  }
  return kExitOk;
}

int cmd_asm(const std::string& in, const std::string& out) {
  auto words = isa::assemble(slurp(in));
  isa::write_program(out, words);
  std::cout << "words " << words.size() << "\n";
  return kExitOk;
}

int cmd_disasm(const std::string& in, const std::string& out) {
  auto text = isa::disassemble(isa::read_program(in));
  if (out.empty()) std::cout << text;
  else spit(out, text);
  return kExitOk;
}

struct RangeSpec {
  double lo = 0, hi = 0;
};

RangeSpec parse_range(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) throw ParseError("range must be lo:hi");
  RangeSpec r;
  try {
    r.lo = std::stod(s.substr(0, colon));
    r.hi = std::stod(s.substr(colon + 1));
  } catch (...) {
    throw ParseError("bad range: " + s);
  }
  if (!(r.lo < r.hi)) throw ParseError("range must have lo < hi: " + s);
  return r;
}

int cmd_approx_report(const std::string& isqrt_range, const std::string& tanh_range,
                      const std::string& gelu_range, int samples, uint64_t seed,
                      const std::string& csv_path, const std::string& config_path) {
  auto cfg = load_config(config_path);
  if (samples <= 0) throw ParseError("samples must be positive");
  auto isq = parse_range(isqrt_range);
  auto tnh = parse_range(tanh_range);
  auto gel = parse_range(gelu_range);
  refmodel::Rng rng(seed ^ 0x5DEECE66Dull);

  auto rmse_of = [&](const RangeSpec& r, bool log_uniform, auto&& approx, auto&& exact) {
    double se = 0;
    refmodel::Rng local(rng.next());
    for (int t = 0; t < samples; ++t) {
      double x = log_uniform ? std::exp(local.uniform(std::log(r.lo), std::log(r.hi)))
                             : local.uniform(r.lo, r.hi);
      Bf16 xb = Bf16::from_double(x);
      double err = approx(xb) - exact(xb.to_double());
      se += err * err;
    }
    return std::sqrt(se / samples);
  };

  const auto& ac = cfg.arith;
  double r_isqrt = rmse_of(isq, true,
                           [&](Bf16 x) { return bfarith::fast_isqrt(x, ac).to_double(); },
                           [](double x) { return 1.0 / std::sqrt(x); });
  double r_tanh = rmse_of(tnh, false,
                          [&](Bf16 x) { return bfarith::pade_tanh(x, ac).to_double(); },
                          [](double x) { return std::tanh(x); });
  double r_gelu = rmse_of(gel, false,
                          [&](Bf16 x) { return bfarith::gelu(x, ac).to_double(); },
                          [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); });

  print_config_header(std::cout, cfg);
  char line[160];
  std::ostringstream csv;
  csv << "function,lo,hi,sampling,samples,rmse\n";
  auto emit = [&](const char* name, const RangeSpec& r, const char* sampling, double rmse) {
    std::snprintf(line, sizeof line, "%-10s [%g, %g] %-11s rmse %.6g\n", name, r.lo, r.hi, sampling, rmse);
    std::cout << line;
    csv << name << ',' << r.lo << ',' << r.hi << ',' << sampling << ',' << samples << ',' << rmse << "\n";
  };
  emit("isqrt", isq, "log-uniform", r_isqrt);
  emit("pade_tanh", tnh, "uniform", r_tanh);
  emit("gelu", gel, "uniform", r_gelu);
  if (!csv_path.empty()) spit(csv_path, csv.str());
  return kExitOk;
}

struct BenchShape {
  int seq = 128, hidden = 768, heads = 12, mlp = 3072, batch = 1;
};

// Compiles and times one node class at the bench shape; returns the report.
machine::CycleReport bench_node(graph::OpKind op, int rows, int d,
                                const machine::MachineConfig& cfg, int64_t* elements) {
  refmodel::Rng rng(404);
  graph::Graph g;
  graph::TensorInfo x;
  x.name = "x";
  x.shape = {rows, d};
  x.is_input = true;
  for (int64_t i = 0; i < int64_t(rows) * d; ++i) x.data.push_back(rng.normal());
  g.tensors.emplace("x", x);
  graph::TensorInfo y;
  y.name = "y";
  y.shape = {rows, d};
  y.is_output = true;
  g.tensors.emplace("y", y);
  graph::Node n;
  n.id = "bench";
  n.op = op;
  n.inputs = {"x"};
  n.output = "y";
  g.nodes.push_back(n);
  auto lp = compiler::compile(g, cfg);
  auto mem = lp.memory_image;
  *elements = int64_t(rows) * d;
  return machine::run(lp.per_core, mem, cfg);
}

machine::CycleReport bench_matmul(int m, int k, int n, const machine::MachineConfig& cfg) {
  refmodel::Rng rng(505);
  graph::Graph g;
  auto tens = [&](const std::string& name, std::vector<int64_t> shape, graph::Format fmt,
                  bool input, bool weight, double scale) {
    graph::TensorInfo t;
    t.name = name;
    t.shape = std::move(shape);
    t.format = fmt;
    t.is_input = input;
    t.is_weight = weight;
    t.scale = scale;
    if (input || weight) {
      int64_t nel = 1;
      for (auto dd : t.shape) nel *= dd;
      for (int64_t i = 0; i < nel; ++i) t.data.push_back(rng.normal());
    }
    g.tensors.emplace(name, t);
  };
  tens("a", {m, k}, graph::Format::Int8, true, false, 0.02);
  tens("b", {k, n}, graph::Format::Int8, false, true, 0.0);
  tens("acc", {m, n}, graph::Format::Bf16, false, false, 0.0);
  tens("z", {m, n}, graph::Format::Int8, false, false, 0.3);
  g.tensor("z").is_output = true;
  graph::Node mm;
  mm.id = "mm";
  mm.op = graph::OpKind::MatMul;
  mm.inputs = {"a", "b"};
  mm.output = "acc";
  g.nodes.push_back(mm);
  graph::Node q;
  q.id = "q";
  q.op = graph::OpKind::Quantize;
  q.inputs = {"acc"};
  q.output = "z";
  g.nodes.push_back(q);
  auto lp = compiler::compile(g, cfg);
  auto mem = lp.memory_image;
  return machine::run(lp.per_core, mem, cfg);
}

int cmd_bench(const BenchShape& bs, const std::string& config_path) {
  auto cfg = load_config(config_path);
  print_config_header(std::cout, cfg);
  if (bs.seq <= 0 || bs.hidden <= 0 || bs.mlp <= 0 || bs.heads <= 0) {
    std::cout << "layer,cycles,gops_or_gflops\n";  // empty model: empty table
    return kExitOk;
  }
  char line[160];
  std::cout << "layer,cycles,gops_or_gflops\n";
  struct Row {
    const char* name;
    int m, k, n;
  };
  int dh = bs.hidden / bs.heads;
  Row rows[] = {{"QKV-GEN", bs.seq, bs.hidden, 3 * bs.hidden},
                {"QK-MUL", bs.seq, dh, bs.seq},
                {"SV-MUL", bs.seq, bs.seq, dh},
                {"ATT-PROJ", bs.seq, bs.hidden, bs.hidden},
                {"FFN1", bs.seq, bs.hidden, bs.mlp},
                {"FFN2", bs.seq, bs.mlp, bs.hidden}};
  for (const auto& r : rows) {
    if (r.k > cfg.d_mat) {
      std::snprintf(line, sizeof line, "%s,skipped,inner extent %d exceeds D_mat %d\n", r.name,
                    r.k, cfg.d_mat);
      std::cout << line;
      continue;
    }
    auto rep = bench_matmul(r.m, r.k, r.n, cfg);
    std::snprintf(line, sizeof line, "%s,%lld,%.2f\n", r.name,
                  static_cast<long long>(rep.total_cycles), rep.gops_int8);
    std::cout << line;
  }

  std::cout << "\nfunction,elements,cycles,cycles_per_element,paper_cycles_per_element\n";
  struct NlRow {
    const char* name;
    graph::OpKind op;
    int rows, d;
    double paper;
  };
  NlRow nl[] = {{"SoftMax", graph::OpKind::Softmax, bs.heads * bs.seq, bs.seq, 0.50},
                {"LayerNorm", graph::OpKind::LayerNorm, bs.seq, bs.hidden, 0.51},
                {"GELU", graph::OpKind::Gelu, bs.seq, bs.mlp, 0.39}};
  for (const auto& r : nl) {
    int64_t elements = 0;
    auto rep = bench_node(r.op, r.rows, r.d, cfg, &elements);
    double cpe = static_cast<double>(rep.total_cycles) / static_cast<double>(elements);
    std::snprintf(line, sizeof line, "%s,%lld,%lld,%.3f,%.2f\n", r.name, static_cast<long long>(elements),
                  static_cast<long long>(rep.total_cycles), cpe, r.paper);
    std::cout << line;
  }

  // Peak sustained throughput: a dependency-free MUL.V stream on all cores.
  {
    std::vector<uint64_t> words;
    isa::Instruction c0 = isa::Instruction::config(
        static_cast<uint8_t>(isa::ConfigId::ConstBase), bfarith::kBitsThreeHalves);
    isa::Instruction c1 = isa::Instruction::config(
        static_cast<uint8_t>(isa::ConfigId::ConstBase) + 1, bfarith::kBitsHalf);
    words.push_back(isa::encode(c0));
    words.push_back(isa::encode(c1));
    for (int t = 0; t < 4000; ++t) {
      isa::Instruction i;
      i.opcode = isa::Opcode::MulV;
      i.dst = static_cast<uint8_t>(isa::kRegVxBase + (t % 4));
      i.srcA = isa::kRegConstBase;
      i.srcB = isa::kRegConstBase + 1;
      i.len = static_cast<uint16_t>(cfg.lanes());
      words.push_back(isa::encode(i));
    }
    words.push_back(isa::encode(isa::Instruction{}));
    std::vector<std::vector<uint64_t>> progs(static_cast<size_t>(cfg.cores), words);
    std::vector<uint8_t> mem;
    auto rep = machine::run(progs, mem, cfg);
    std::snprintf(line, sizeof line,
                  "\npeak_mulv_stream gflops %.2f of theoretical %.2f (%.1f%%)\n",
                  rep.gflops_bf16, rep.gflops_theoretical,
                  100.0 * rep.gflops_bf16 / rep.gflops_theoretical);
    std::cout << line;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TATAA toolchain: transformable int8/bfloat16 accelerator compiler and simulator"};
  app.require_subcommand(1);

  std::string graph_path, config_path, out_dir = ".", manifest_path, trace_path;
  std::string in_path, out_path;
  std::string isqrt_range = "1:16", tanh_range = "-4:4", gelu_range = "-1:1", csv_path;
  std::vector<std::string> dumps;
  int batch = 1, samples = 10000, cores = 0, acc_bits = 0;
  int64_t watchdog = 0;
  uint64_t seed = 1;
  bool no_double_buffer = false;
  BenchShape bs;

  auto* compile = app.add_subcommand("compile", "compile a graph to programs + memory image");
  compile->add_option("--graph", graph_path, "graph JSON")->required();
  compile->add_option("--config", config_path, "machine config JSON");
  compile->add_option("--out-dir", out_dir, "output directory");
  compile->add_option("--batch", batch, "batch items partitioned across cores");
  compile->add_flag("--no-double-buffer", no_double_buffer, "serialize tile loads");

  auto* run = app.add_subcommand("run", "run compiled programs on the simulator");
  run->add_option("--manifest", manifest_path, "manifest JSON")->required();
  run->add_option("--config", config_path, "machine config JSON");
  run->add_option("--trace", trace_path, "write CSV trace");
  run->add_option("--out-dir", out_path, "write final memory image here");
  run->add_option("--watchdog", watchdog, "cycle cap");
  run->add_option("--cores", cores, "core count override");
  run->add_option("--acc-bits", acc_bits, "accumulator width override");
  run->add_option("--dump", dumps, "tensor=file: dump tensor values after the run");

  auto* asmc = app.add_subcommand("asm", "assemble text to a program binary");
  asmc->add_option("--in", in_path, "assembly text")->required();
  asmc->add_option("--out", out_path, "program binary")->required();

  auto* dis = app.add_subcommand("disasm", "disassemble a program binary");
  dis->add_option("--in", in_path, "program binary")->required();
  dis->add_option("--out", out_path, "text output (stdout if omitted)");

  auto* approx = app.add_subcommand("approx-report", "RMSE table for isqrt / tanh / GELU");
  approx->add_option("--isqrt", isqrt_range, "lo:hi, sampled log-uniform");
  approx->add_option("--tanh", tanh_range, "lo:hi, sampled uniform");
  approx->add_option("--gelu", gelu_range, "lo:hi, sampled uniform");
  approx->add_option("--samples", samples, "sample count");
  approx->add_option("--seed", seed, "sampling seed");
  approx->add_option("--csv", csv_path, "also write CSV");
  approx->add_option("--config", config_path, "machine config JSON");

  auto* bench = app.add_subcommand("bench", "layer-wise cycles/GOPS and cycles-per-element");
  bench->add_option("--config", config_path, "machine config JSON");
  bench->add_option("--seq", bs.seq, "sequence length");
  bench->add_option("--hidden", bs.hidden, "hidden size");
  bench->add_option("--heads", bs.heads, "attention heads");
  bench->add_option("--mlp", bs.mlp, "MLP size");
  bench->add_option("--batch", bs.batch, "batch");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compile) return cmd_compile(graph_path, config_path, out_dir, batch, no_double_buffer);
    if (*run) return cmd_run(manifest_path, config_path, trace_path, out_path, watchdog, cores,
                             acc_bits, dumps);
    if (*asmc) return cmd_asm(in_path, out_path);
    if (*dis) return cmd_disasm(in_path, out_path);
    if (*approx)
      return cmd_approx_report(isqrt_range, tanh_range, gelu_range, samples, seed, csv_path,
                               config_path);
    if (*bench) return cmd_bench(bs, config_path);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const CompileError& e) {
    std::cerr << "compile error: " << e.what() << "\n";
    return kExitCompile;
  } catch (const RunError& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return kExitRun;
  } catch (const VerifyError& e) {
    std::cerr << "verify error: " << e.what() << "\n";
    return kExitVerify;
  } catch (const std::invalid_argument& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  return kExitOk;
}
