#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eddy/forward.hpp"
#include "eddy/gradient.hpp"
#include "eddy/inversion.hpp"
#include "eddy/mesh.hpp"

namespace eddy {

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {
inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Impedance signal CSV
// ---------------------------------------------------------------------------

inline void write_signal_csv(const ImpedanceSignal& sig, const std::string& path,
                             const std::string& manifest_hash = {}) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  if (!manifest_hash.empty()) out << "# manifest " << manifest_hash << "\n";
  out << "zeta,reZ11,imZ11,reZ21,imZ21,reZ22,imZ22,reFA,imFA,reF3,imF3\n";
  using detail::fmt17;
  for (std::size_t q = 0; q < sig.size(); ++q) {
    out << fmt17(sig.zeta[q]) << ',' << fmt17(sig.z11[q].real()) << ','
        << fmt17(sig.z11[q].imag()) << ',' << fmt17(sig.z21[q].real()) << ','
        << fmt17(sig.z21[q].imag()) << ',' << fmt17(sig.z22[q].real()) << ','
        << fmt17(sig.z22[q].imag()) << ',' << fmt17(sig.fa[q].real()) << ','
        << fmt17(sig.fa[q].imag()) << ',' << fmt17(sig.f3[q].real()) << ','
        << fmt17(sig.f3[q].imag()) << "\n";
  }
  if (!out) throw InputError("failed writing " + path);
}

inline ImpedanceSignal read_signal_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  ImpedanceSignal sig;
  std::string line;
  long lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("zeta,", 0) != 0)
        throw ParseError("expected signal CSV header", lineno);
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    double col[11];
    char comma;
    for (int i = 0; i < 11; ++i) {
      if (!(ss >> col[i])) throw ParseError("malformed signal row", lineno);
      if (i < 10 && !(ss >> comma && comma == ','))
        throw ParseError("malformed signal row", lineno);
    }
    sig.zeta.push_back(col[0]);
    sig.z11.emplace_back(col[1], col[2]);
    sig.z21.emplace_back(col[3], col[4]);
    sig.z22.emplace_back(col[5], col[6]);
    sig.fa.emplace_back(col[7], col[8]);
    sig.f3.emplace_back(col[9], col[10]);
  }
  if (!header_seen) throw ParseError("empty signal CSV", lineno);
  return sig;
}

// ---------------------------------------------------------------------------
// Deposit thickness tables
// ---------------------------------------------------------------------------

inline void write_deposit(const DepositParam& L, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "depositL 1\n";
  out << "layers " << L.layers << " sectors " << L.sectors << " hbar "
      << detail::fmt17(L.hbar) << " lmax " << detail::fmt17(L.Lmax) << "\n";
  for (int n = 0; n < L.layers; ++n) {
    for (int s = 0; s < L.sectors; ++s)
      out << (s ? " " : "") << detail::fmt17(L.at(n, s));
    out << "\n";
  }
  if (!out) throw InputError("failed writing " + path);
}

inline DepositParam read_deposit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  long lineno = 0;
  auto next = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line[0] != '#') return true;
    }
    return false;
  };
  if (!next() || line.rfind("depositL 1", 0) != 0)
    throw ParseError("expected header 'depositL 1'", lineno);
  if (!next()) throw ParseError("missing deposit table size", lineno);
  DepositParam L;
  {
    std::istringstream ss(line);
    std::string w1, w2, w3, w4;
    if (!(ss >> w1 >> L.layers >> w2 >> L.sectors >> w3 >> L.hbar >> w4 >> L.Lmax) ||
        w1 != "layers" || w2 != "sectors" || w3 != "hbar" || w4 != "lmax" ||
        L.layers < 1 || L.sectors < 1 || L.hbar <= 0)
      throw ParseError("malformed deposit table size", lineno);
  }
  L.L.reserve(static_cast<std::size_t>(L.layers) * L.sectors);
  for (int n = 0; n < L.layers; ++n) {
    if (!next()) throw ParseError("unexpected end of deposit table", lineno);
    std::istringstream ss(line);
    for (int s = 0; s < L.sectors; ++s) {
      double v;
      if (!(ss >> v)) throw ParseError("malformed deposit row", lineno);
      L.L.push_back(v);
    }
  }
  return L;
}

// ---------------------------------------------------------------------------
// Descent artifacts
// ---------------------------------------------------------------------------

inline void write_history_csv(const DescentResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "k,f,gradnorm\n";
  for (const auto& row : res.history)
    out << row.k << ',' << detail::fmt17(row.f) << ','
        << detail::fmt17(row.gradnorm) << "\n";
}

inline void write_run_log(const DescentResult& res, std::ostream& out) {
  for (const auto& tr : res.trials)
    out << tr.k << ' ' << tr.p << ' ' << detail::fmt17(tr.t) << ' '
        << detail::fmt17(tr.f) << ' ' << (tr.accepted ? "accepted" : "rejected")
        << "\n";
  out << "status "
      << (res.status == DescentStatus::Converged ? "converged" : "singular_point")
      << "\n";
}

inline void write_density_csv(const ShapeGradient& sg, const InterfaceGamma& gamma,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "tri_id,layer,sector,area,g\n";
  for (std::size_t i = 0; i < sg.g.size(); ++i) {
    const auto& tri = gamma.tris[i];
    out << i << ',' << tri.layer << ',' << tri.sector << ','
        << detail::fmt17(tri.area) << ',' << detail::fmt17(sg.g[i]) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::string config_path;
  std::string mesh_source;  // "generated" or a file path
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string version = "eddyct 1.0";
  std::map<std::string, std::string> input_hashes;

  std::string to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_path;
    j["mesh_source"] = mesh_source;
    j["out_dir"] = out_dir;
    j["seed"] = seed;
    j["version"] = version;
    j["input_hashes"] = input_hashes;
    return j.dump(2);
  }

  std::string hash() const {
    const std::string body = to_json();
    return hex64(fnv1a(body.data(), body.size()));
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out << to_json() << "\n";
  }
};

// ---------------------------------------------------------------------------
// Plot emission (gnuplot data + script, no in-process rendering)
// ---------------------------------------------------------------------------

inline void emit_signal_plot(const std::vector<std::string>& csv_files,
                             const std::string& out_dir) {
  std::ofstream gp(out_dir + "/signals.gp");
  gp << "set datafile separator ','\n";
  gp << "set xlabel 'zeta (mm)'\nset ylabel '|Z|'\nset key outside\n";
  gp << "plot \\\n";
  for (std::size_t i = 0; i < csv_files.size(); ++i) {
    gp << "  '" << csv_files[i]
       << "' using 1:(sqrt($8**2+$9**2)) with linespoints title 'FA "
       << csv_files[i] << "'";
    gp << (i + 1 < csv_files.size() ? ", \\\n" : "\n");
  }
}

inline void emit_history_plot(const std::string& history_csv,
                              const std::string& out_dir) {
  std::ofstream gp(out_dir + "/history.gp");
  gp << "set datafile separator ','\n";
  gp << "set xlabel 'iteration'\nset ylabel 'misfit'\nset logscale y\n";
  gp << "plot '" << history_csv << "' using 1:2 with linespoints title 'f'\n";
}

}  // namespace eddy
