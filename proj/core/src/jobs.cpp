#include "tsvat/jobs.hpp"

#include <algorithm>

#include "tsvat/error.hpp"

namespace tsvat::jobs {

JobQueue::JobQueue(std::size_t workers) {
  require(workers >= 1, ErrorCode::InvalidConfig, "job queue needs at least one worker");
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

JobQueue::~JobQueue() {
  {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
    stopping_ = true;
  }
  changed_.notify_all();
  for (auto& t : threads_) t.join();
}

void JobQueue::enqueue(const std::string& id, Task task) {
  {
    std::lock_guard lock(mutex_);
    require(!entries_.count(id), ErrorCode::ValidationError, "job " + id + " already queued");
    entries_[id] = {};
    queue_.emplace_back(id, std::move(task));
  }
  changed_.notify_all();
}

void JobQueue::worker_loop() {
  for (;;) {
    std::pair<std::string, Task> job;
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++active_;
    }
    const std::string id = job.first;
    job.second([this, id](double p) { report(id, p); });
    {
      std::lock_guard lock(mutex_);
      auto& e = entries_[id];
      e.progress = 1.0;
      e.finished = true;
      --active_;
    }
    changed_.notify_all();
  }
}

void JobQueue::report(const std::string& id, double p) {
  std::lock_guard lock(mutex_);
  auto& e = entries_[id];
  e.progress = std::max(e.progress, std::clamp(p, 0.0, 1.0));
}

double JobQueue::progress(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(id);
  return it == entries_.end() ? 0.0 : it->second.progress;
}

bool JobQueue::known(const std::string& id) const {
  std::lock_guard lock(mutex_);
  return entries_.count(id) > 0;
}

bool JobQueue::finished(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(id);
  return it != entries_.end() && it->second.finished;
}

void JobQueue::wait(const std::string& id) const {
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [&] {
    const auto it = entries_.find(id);
    return it == entries_.end() || it->second.finished;
  });
}

void JobQueue::wait_all() const {
  std::unique_lock lock(mutex_);
  changed_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
}

}  // namespace tsvat::jobs
