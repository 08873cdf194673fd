#include "ogd/xtb_bridge.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace ogd {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t b = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

// Locale-independent; accepts Fortran D exponents and a leading '+'.
std::optional<double> parse_number(std::string_view token) {
  std::string buf(trim(token));
  if (!buf.empty() && buf.front() == '+') buf.erase(0, 1);
  for (auto& c : buf) {
    if (c == 'D' || c == 'd') c = 'E';
  }
  double value = 0.0;
  const auto* end = buf.data() + buf.size();
  const auto [ptr, ec] = std::from_chars(buf.data(), end, value);
  if (ec != std::errc() || ptr != end || buf.empty()) return std::nullopt;
  return value;
}

std::string format_fixed(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 10);
  if (ec != std::errc()) throw InvalidParameter("coordinate cannot be formatted");
  return std::string(buf, ptr);
}

OracleEval failed(int n_atoms) {
  OracleEval out;
  out.gradient = Positions::Zero(n_atoms, 3);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool is_executable(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

}  // namespace

void XtbConfig::validate() const {
  if (!(timeout > 0.0)) throw InvalidParameter("xtb timeout must be > 0");
}

fs::path resolve_xtb_executable(const XtbConfig& cfg) {
  fs::path exe = cfg.executable_path;
  if (const char* env = std::getenv(kXtbPathEnv); env && *env) exe = env;
  if (exe.empty()) return {};
  if (exe.has_parent_path()) return is_executable(exe) ? exe : fs::path{};
  if (const char* path = std::getenv("PATH")) {
    std::string_view rest(path);
    while (!rest.empty()) {
      const auto colon = rest.find(':');
      const fs::path candidate = fs::path(std::string(rest.substr(0, colon))) / exe;
      if (is_executable(candidate)) return candidate;
      if (colon == std::string_view::npos) break;
      rest.remove_prefix(colon + 1);
    }
  }
  return {};
}

std::string write_xyz(const AtomLabels& labels, const Positions& positions_angstrom, std::string_view comment) {
  const auto n = positions_angstrom.rows();
  if (n < 1) throw InvalidParameter("xyz needs at least one atom");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ShapeMismatch("xyz: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " atoms");
  }
  if (!positions_angstrom.allFinite()) throw NonFiniteInput("xyz positions are not finite");
  if (comment.find('\n') != std::string_view::npos) throw InvalidParameter("xyz comment must be a single line");

  std::string out = std::to_string(n) + "\n" + std::string(comment) + "\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    out += labels.symbols[static_cast<std::size_t>(i)];
    for (int c = 0; c < 3; ++c) out += " " + format_fixed(positions_angstrom(i, c));
    out += "\n";
  }
  return out;
}

std::vector<XyzFrame> parse_xyz(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<XyzFrame> frames;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (trim(lines[i]).empty()) {
      ++i;
      continue;
    }
    int n = 0;
    const auto count = trim(lines[i]);
    const auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), n);
    if (ec != std::errc() || ptr != count.data() + count.size() || n < 1) {
      throw InvalidParameter("xyz line " + std::to_string(i + 1) + ": expected a positive atom count");
    }
    if (i + 1 + static_cast<std::size_t>(n) >= lines.size()) {
      throw InvalidParameter("xyz line " + std::to_string(i + 1) + ": truncated frame");
    }
    XyzFrame frame;
    frame.comment = std::string(trim(lines[i + 1]));
    frame.positions.resize(n, 3);
    for (int a = 0; a < n; ++a) {
      const std::size_t ln = i + 2 + static_cast<std::size_t>(a);
      const auto tokens = split_ws(lines[ln]);
      if (tokens.size() < 4) throw InvalidParameter("xyz line " + std::to_string(ln + 1) + ": expected symbol x y z");
      frame.labels.symbols.emplace_back(tokens[0]);
      for (int c = 0; c < 3; ++c) {
        const auto v = parse_number(tokens[1 + c]);
        if (!v) throw InvalidParameter("xyz line " + std::to_string(ln + 1) + ": bad coordinate");
        frame.positions(a, c) = *v;
      }
    }
    frames.push_back(std::move(frame));
    i += 2 + static_cast<std::size_t>(n);
  }
  return frames;
}

OracleEval parse_gradient_file(std::string_view text, int n_atoms) {
  const auto lines = split_lines(text);
  // Locate the last "cycle" header inside the $grad block.
  std::optional<std::size_t> header;
  bool in_grad = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto l = trim(lines[i]);
    if (l.starts_with("$grad")) in_grad = true;
    else if (l.starts_with("$")) in_grad = false;
    else if (in_grad && l.starts_with("cycle")) header = i;
  }
  if (!header || n_atoms < 1) return failed(std::max(n_atoms, 0));

  // "cycle = 1    SCF energy = -5.07   |dE/dxyz| = 0.0006"
  const auto head = lines[*header];
  const auto epos = head.find("energy");
  if (epos == std::string_view::npos) return failed(n_atoms);
  const auto eq = head.find('=', epos);
  if (eq == std::string_view::npos) return failed(n_atoms);
  const auto tokens = split_ws(head.substr(eq + 1));
  if (tokens.empty()) return failed(n_atoms);
  const auto energy = parse_number(tokens.front());
  if (!energy) return failed(n_atoms);

  const std::size_t first_coord = *header + 1;
  const std::size_t first_grad = first_coord + static_cast<std::size_t>(n_atoms);
  if (first_grad + static_cast<std::size_t>(n_atoms) > lines.size()) return failed(n_atoms);
  for (std::size_t i = first_coord; i < first_grad; ++i) {
    if (split_ws(lines[i]).size() != 4) return failed(n_atoms);
  }
  Positions grad(n_atoms, 3);
  for (int a = 0; a < n_atoms; ++a) {
    const auto row = split_ws(lines[first_grad + static_cast<std::size_t>(a)]);
    if (row.size() != 3) return failed(n_atoms);
    for (int c = 0; c < 3; ++c) {
      const auto v = parse_number(row[static_cast<std::size_t>(c)]);
      if (!v) return failed(n_atoms);
      grad(a, c) = *v;
    }
  }
  // The block must end after exactly n_atoms gradient rows.
  const std::size_t after = first_grad + static_cast<std::size_t>(n_atoms);
  if (after < lines.size() && !trim(lines[after]).starts_with("$")) return failed(n_atoms);
  if (!std::isfinite(*energy) || !grad.allFinite()) return failed(n_atoms);

  OracleEval out;
  out.energy = *energy;
  out.gradient = std::move(grad);
  out.converged = true;
  return out;
}

namespace {

enum class RunStatus { ok, failed, timeout };

RunStatus run_process(const fs::path& exe, const std::vector<std::string>& args, const fs::path& cwd,
                      double timeout) {
  std::vector<std::string> storage;
  storage.push_back(exe.string());
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  const std::string dir = cwd.string();
  const std::string out_path = (cwd / "xtb.out").string();

  const pid_t pid = ::fork();
  if (pid < 0) return RunStatus::failed;
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(dir.c_str()) != 0) ::_exit(127);
    const int fd = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, STDOUT_FILENO);
      ::dup2(fd, STDERR_FILENO);
      ::close(fd);
    }
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout);
  auto poll = std::chrono::microseconds(200);
  while (true) {
    int status = 0;
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) return WIFEXITED(status) && WEXITSTATUS(status) == 0 ? RunStatus::ok : RunStatus::failed;
    if (r < 0) return RunStatus::failed;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      return RunStatus::timeout;
    }
    std::this_thread::sleep_for(poll);
    poll = std::min(poll * 2, std::chrono::microseconds(20000));
  }
}

bool scf_failed(std::string_view log) {
  return log.find("SCF not converged") != std::string_view::npos ||
         log.find("convergence criteria cannot be satisfied") != std::string_view::npos ||
         log.find("abnormal termination") != std::string_view::npos;
}

}  // namespace

OracleEval invoke(const XtbConfig& cfg, const AtomLabels& labels, const Positions& positions_bohr) {
  cfg.validate();
  const fs::path exe = resolve_xtb_executable(cfg);
  if (exe.empty()) throw InvalidParameter("xtb executable not found (set " + std::string(kXtbPathEnv) + ")");
  const int n = static_cast<int>(positions_bohr.rows());
  if (static_cast<int>(labels.size()) != n) throw ShapeMismatch("xtb: label count differs from atom count");
  if (n < 1 || !positions_bohr.allFinite()) return failed(std::max(n, 0));

  std::error_code ec;
  fs::create_directories(cfg.workdir_root, ec);
  std::string templ = (cfg.workdir_root / "ogd-xtb-XXXXXX").string();
  if (::mkdtemp(templ.data()) == nullptr) return failed(n);
  const fs::path dir(templ);

  OracleEval result = failed(n);
  {
    std::ofstream xyz(dir / "coords.xyz", std::ios::binary);
    xyz << write_xyz(labels, positions_bohr / kBohrPerAngstrom, "ogd");
  }
  std::vector<std::string> args{"coords.xyz", "--grad"};
  args.insert(args.end(), cfg.extra_args.begin(), cfg.extra_args.end());

  if (run_process(exe, args, dir, cfg.timeout) == RunStatus::ok && !scf_failed(read_file(dir / "xtb.out"))) {
    result = parse_gradient_file(read_file(dir / "gradient"), n);
  }
  if (!cfg.keep_workdirs) fs::remove_all(dir, ec);
  return result;
}

XtbOracle::XtbOracle(XtbConfig cfg, AtomLabels labels) : cfg_(std::move(cfg)), labels_(std::move(labels)) {
  cfg_.validate();
  if (resolve_xtb_executable(cfg_).empty()) {
    throw InvalidParameter("xtb executable not found (set " + std::string(kXtbPathEnv) + ")");
  }
}

OracleEval XtbOracle::evaluate(const Positions& positions) const { return invoke(cfg_, labels_, positions); }

std::string XtbOracle::describe() const {
  std::string out = "xtb:" + cfg_.executable_path.string();
  for (const auto& s : labels_.symbols) out += "," + s;
  for (const auto& a : cfg_.extra_args) out += ";" + a;
  return out;
}

}  // namespace ogd
