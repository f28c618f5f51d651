#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

#include "askac/advisors.hpp"
#include "askac/errors.hpp"

namespace askac::advisors {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

struct RemoteAdvisor::Impl {
  class Session : public std::enable_shared_from_this<Session> {
   public:
    Session(tcp::socket socket, Impl* owner) : ws_(std::move(socket)), owner_(owner) {}

    void start() {
      ws_.text(true);
      ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->owner_->on_open(self);
        self->read();
      });
    }

    void send(std::string text) {
      outbox_.push_back(std::move(text));
      if (outbox_.size() == 1) write_next();
    }

    void close() {
      beast::error_code ec;
      ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
      ws_.next_layer().close(ec);
    }

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->owner_->on_close(self);
          return;
        }
        self->owner_->on_message(beast::buffers_to_string(self->buffer_.data()));
        self->buffer_.consume(self->buffer_.size());
        self->read();
      });
    }

    void write_next() {
      ws_.async_write(net::buffer(outbox_.front()),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        if (ec) {
                          self->outbox_.clear();
                          return;
                        }
                        self->outbox_.pop_front();
                        if (!self->outbox_.empty()) self->write_next();
                      });
    }

    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::string> outbox_;
    Impl* owner_;
  };

  explicit Impl(Options opts) : options(std::move(opts)), acceptor(io) {
    const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
    acceptor.open(endpoint.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen();
    accept();
    worker = std::thread([this] { io.run(); });
  }

  ~Impl() {
    net::post(io, [this] {
      beast::error_code ec;
      acceptor.close(ec);
      if (session) session->close();
      session.reset();
      io.stop();
    });
    if (worker.joinable()) worker.join();
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Session>(std::move(socket), this)->start();
      accept();
    });
  }

  // io thread
  void on_open(const std::shared_ptr<Session>& s) {
    if (session) session->close();
    session = s;
    std::string greeting;
    {
      std::lock_guard lock(mu);
      connected = true;
      ++generation;
      inbox.clear();
      greeting = hello_text;
    }
    if (!greeting.empty()) session->send(greeting);
    cv.notify_all();
  }

  // io thread
  void on_close(const std::shared_ptr<Session>& s) {
    if (session != s) return;
    session.reset();
    {
      std::lock_guard lock(mu);
      connected = false;
    }
    cv.notify_all();
  }

  // io thread
  void on_message(std::string text) {
    {
      std::lock_guard lock(mu);
      inbox.push_back(std::move(text));
    }
    cv.notify_all();
  }

  void send(std::string text) {
    net::post(io, [this, text = std::move(text)]() mutable {
      if (session) session->send(std::move(text));
    });
  }

  Options options;
  net::io_context io;
  tcp::acceptor acceptor;
  std::thread worker;
  std::shared_ptr<Session> session;  // touched on the io thread only

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> inbox;
  bool connected = false;
  std::uint64_t generation = 0;
  std::string hello_text;

  std::atomic<std::uint64_t> protocol_errors{0};
  std::atomic<std::uint64_t> timeouts{0};
};

RemoteAdvisor::RemoteAdvisor(Options options) : impl_(std::make_unique<Impl>(std::move(options))) {}

RemoteAdvisor::~RemoteAdvisor() = default;

unsigned short RemoteAdvisor::port() const { return impl_->acceptor.local_endpoint().port(); }

bool RemoteAdvisor::connected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->connected;
}

bool RemoteAdvisor::wait_for_client(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mu);
  return impl_->cv.wait_for(lock, timeout, [&] { return impl_->connected; });
}

void RemoteAdvisor::announce(const std::string& env, const std::vector<std::string>& actions) {
  auto text = protocol::hello(env, actions);
  {
    std::lock_guard lock(impl_->mu);
    impl_->hello_text = text;
  }
  impl_->send(std::move(text));
}

void RemoteAdvisor::publish_stats(std::uint64_t iteration, double roa, double mean_return) {
  impl_->send(protocol::stats(iteration, roa, mean_return));
}

std::uint64_t RemoteAdvisor::protocol_errors() const { return impl_->protocol_errors.load(); }
std::uint64_t RemoteAdvisor::timeouts() const { return impl_->timeouts.load(); }

std::optional<AdvisorReply> RemoteAdvisor::query(const AdvisorQuery& q) {
  auto& im = *impl_;
  const std::string ask_text = protocol::ask(q);
  auto deadline = Clock::now() + im.options.timeout;
  bool reissued = false;
  std::uint64_t sent_generation = 0;
  bool sent = false;

  auto give_up = [&](const char* why) -> std::optional<AdvisorReply> {
    ++im.timeouts;
    std::cerr << "[askac] advisor query " << q.id << " " << why
              << "; falling back to the agent's own action\n";
    return std::nullopt;
  };

  while (true) {
    std::string text;
    {
      std::unique_lock lock(im.mu);
      // (Re)send whenever a console is attached that has not seen this query.
      auto ready = [&] {
        return (im.connected && (!sent || im.generation != sent_generation)) ||
               (sent && !im.inbox.empty());
      };
      if (!im.cv.wait_until(lock, deadline, ready)) return give_up("timed out");
      if (im.connected && (!sent || im.generation != sent_generation)) {
        sent = true;
        sent_generation = im.generation;
        lock.unlock();
        im.send(ask_text);
        continue;
      }
      text = std::move(im.inbox.front());
      im.inbox.pop_front();
    }

    try {
      const auto message = protocol::parse(text);
      if (message.type != "feedback") continue;  // not a reply; ignore
      const auto reply = protocol::parse_feedback(message);
      if (reply.id != q.id) continue;  // stale reply to an earlier query
      if (std::find(q.legal.begin(), q.legal.end(), reply.action) == q.legal.end())
        throw ProtocolError("advisor protocol: action " + std::to_string(reply.action) +
                            " is not legal for query " + std::to_string(q.id));
      return reply;
    } catch (const ProtocolError& err) {
      ++im.protocol_errors;
      std::cerr << "[askac] " << err.what() << "\n";
      if (reissued) return give_up("failed twice");
      reissued = true;
      deadline = Clock::now() + im.options.timeout;
      im.send(ask_text);
    }
  }
}

}  // namespace askac::advisors
