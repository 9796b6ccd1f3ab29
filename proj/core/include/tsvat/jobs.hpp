#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tsvat::jobs {

using ProgressFn = std::function<void(double)>;
using Task = std::function<void(const ProgressFn&)>;

/// Fixed pool of workers draining a FIFO of tasks keyed by run id. Progress is
/// clamped to [0, 1] and never decreases. Tasks must not throw; the caller
/// wraps them with its own failure handling.
class JobQueue {
 public:
  explicit JobQueue(std::size_t workers = 2);
  ~JobQueue();  // finishes queued and running tasks

  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  void enqueue(const std::string& id, Task task);

  /// 0 until the task reports, 1 once it has finished.
  double progress(const std::string& id) const;
  bool known(const std::string& id) const;
  bool finished(const std::string& id) const;

  void wait(const std::string& id) const;
  void wait_all() const;

  std::size_t workers() const noexcept { return threads_.size(); }

 private:
  struct Entry {
    double progress = 0.0;
    bool finished = false;
  };

  void worker_loop();
  void report(const std::string& id, double p);

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::deque<std::pair<std::string, Task>> queue_;
  std::map<std::string, Entry> entries_;
  std::size_t active_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace tsvat::jobs
