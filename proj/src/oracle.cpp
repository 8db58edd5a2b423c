#include "igauss/oracle.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "igauss/serialization.hpp"

namespace igauss {

namespace {

void write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw OracleError(std::string("oracle: write to child failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

Json point_json(const Vector& x) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(x(i));
  return a;
}

double reply_number(const Json& v, const char* what) {
  if (!v.is_number()) throw OracleError(std::string("oracle: '") + what + "' must be a number");
  const double d = v.get<double>();
  return d;
}

Vector reply_vector(const Json& v, Eigen::Index dim) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != dim)
    throw OracleError("oracle: 'score' must be an array of length " + std::to_string(dim));
  Vector out(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out(i) = reply_number(v[static_cast<std::size_t>(i)], "score");
  return out;
}

Json parse_reply(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw OracleError("oracle: reply is not valid JSON: " + line.substr(0, 200));
  }
  if (!j.is_object() || !j.contains("logp") || !j.contains("score"))
    throw OracleError("oracle: reply must be an object with 'logp' and 'score': " + line.substr(0, 200));
  return j;
}

}  // namespace

OracleTarget::OracleTarget(std::vector<std::string> command, Eigen::Index dim) : command_(std::move(command)), dim_(dim) {
  require(!command_.empty(), "OracleTarget: empty command");
  require(dim_ >= 1, "OracleTarget: dim must be positive");
  std::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  // Close-on-exec so a later oracle's child does not inherit this one's pipe
  // ends and keep its stdin open past our destructor.
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw OracleError("oracle: pipe() failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw OracleError("oracle: pipe() failed");
  }
  // Reports exec failure to the parent through a close-on-exec pipe.
  int status_pipe[2];
  if (::pipe2(status_pipe, O_CLOEXEC) != 0) throw OracleError("oracle: pipe() failed");

  std::vector<char*> argv;
  for (auto& a : command_) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_ = ::fork();
  if (pid_ < 0) throw OracleError("oracle: fork() failed");
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(status_pipe[0]);
    ::execvp(argv[0], argv.data());
    const int err = errno;
    (void)!::write(status_pipe[1], &err, sizeof(err));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(status_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];

  int err = 0;
  ssize_t n;
  do {
    n = ::read(status_pipe[0], &err, sizeof(err));
  } while (n < 0 && errno == EINTR);
  ::close(status_pipe[0]);
  if (n > 0) {
    ::close(to_child_);
    ::close(from_child_);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
    throw OracleError("oracle: cannot execute '" + command_.front() + "': " + std::strerror(err));
  }
}

OracleTarget::~OracleTarget() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

std::string OracleTarget::exchange(const std::string& line) const {
  write_all(to_child_, line + "\n");
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return reply;
    }
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw OracleError(std::string("oracle: read from child failed: ") + std::strerror(errno));
    }
    if (n == 0) throw OracleError("oracle: child closed its output before replying");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

double OracleTarget::log_density_and_score(const Vector& x, Vector& score_out) const {
  require_dim(x.size(), dim_, "OracleTarget");
  std::string reply;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    reply = exchange(Json{{"x", point_json(x)}}.dump());
  }
  const Json j = parse_reply(reply);
  score_out = reply_vector(j.at("score"), dim_);
  return reply_number(j.at("logp"), "logp");
}

double OracleTarget::log_density(const Vector& x) const {
  Vector s;
  return log_density_and_score(x, s);
}

Vector OracleTarget::score(const Vector& x) const {
  Vector s;
  log_density_and_score(x, s);
  return s;
}

void OracleTarget::evaluate_batch(const Matrix& x, Vector& logp, Matrix& scores) const {
  require_dim(x.cols(), dim_, "OracleTarget batch");
  Json pts = Json::array();
  for (Eigen::Index r = 0; r < x.rows(); ++r) pts.push_back(point_json(x.row(r).transpose()));
  std::string reply;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    reply = exchange(Json{{"x", pts}}.dump());
  }
  const Json j = parse_reply(reply);
  const Json& lp = j.at("logp");
  const Json& sc = j.at("score");
  if (!lp.is_array() || !sc.is_array() || static_cast<Eigen::Index>(lp.size()) != x.rows() ||
      static_cast<Eigen::Index>(sc.size()) != x.rows())
    throw OracleError("oracle: batched reply must hold one logp and one score per point");
  logp.resize(x.rows());
  scores.resize(x.rows(), dim_);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    logp(r) = reply_number(lp[static_cast<std::size_t>(r)], "logp");
    scores.row(r) = reply_vector(sc[static_cast<std::size_t>(r)], dim_).transpose();
  }
}

}  // namespace igauss
