#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "beliefnet/mock_oracle.hpp"
#include "beliefnet/parse.hpp"
#include "beliefnet/prompts.hpp"

namespace beliefnet {

enum class Backend { Live, Mock };

struct ModelConfig {
    Backend backend = Backend::Mock;
    std::string model_name = "mock";
    double temperature = 0.7;
    int max_retries = 2;
    int parallelism_limit = 1;
    double requests_per_minute = 60.0;
    std::string endpoint;  // live only, e.g. https://api.openai.com/v1/chat/completions
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 60;
    int retry_backoff_ms = 500;

    void validate() const {
        if (!(temperature >= 0.0 && temperature <= 2.0)) throw Error("temperature must be in [0, 2]");
        if (parallelism_limit < 1) throw Error("parallelism_limit must be at least 1");
        if (max_retries < 0) throw Error("max_retries must be non-negative");
        if (!(requests_per_minute > 0.0)) throw Error("requests_per_minute must be positive");
        if (backend == Backend::Live && endpoint.empty()) throw Error("live backend needs an endpoint");
    }
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    double temperature = 0.7;
    std::vector<ChatMessage> messages;

    nlohmann::json to_json() const {
        nlohmann::json msgs = nlohmann::json::array();
        for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
        return {{"model", model}, {"temperature", temperature}, {"messages", std::move(msgs)}};
    }
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable, bool rate_limited = false)
        : Error(what), retryable_(retryable), rate_limited_(rate_limited) {}
    bool retryable() const noexcept { return retryable_; }
    bool rate_limited() const noexcept { return rate_limited_; }

private:
    bool retryable_;
    bool rate_limited_;
};

/// Something that turns a chat request into reply text.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
};

class MockBackend final : public ChatBackend {
public:
    explicit MockBackend(std::shared_ptr<const MockOracle> oracle) : oracle_(std::move(oracle)) {}

    std::string complete(const ChatRequest& request) override {
        PromptBundle bundle;
        for (const auto& m : request.messages) {
            if (m.role == "system") bundle.system_message = m.content;
            else if (m.role == "user") bundle.user_message = m.content;
        }
        return oracle_->respond(bundle);
    }

private:
    std::shared_ptr<const MockOracle> oracle_;
};

/// Token bucket: capacity of one minute's worth of requests, refilled
/// continuously.
class RateLimiter {
public:
    explicit RateLimiter(double per_minute)
        : rate_per_sec_(per_minute / 60.0), capacity_(std::max(1.0, per_minute)), tokens_(capacity_),
          last_(std::chrono::steady_clock::now()) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        for (;;) {
            refill();
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
            lock.unlock();
            std::this_thread::sleep_for(wait);
            lock.lock();
        }
    }

private:
    void refill() {
        const auto now = std::chrono::steady_clock::now();
        const std::chrono::duration<double> dt = now - last_;
        last_ = now;
        tokens_ = std::min(capacity_, tokens_ + dt.count() * rate_per_sec_);
    }

    std::mutex mutex_;
    double rate_per_sec_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
};

/// Caps the number of requests in flight.
class ConcurrencyLimit {
public:
    explicit ConcurrencyLimit(int limit) : limit_(limit) {}

    class Slot {
    public:
        explicit Slot(ConcurrencyLimit& owner) : owner_(owner) {
            std::unique_lock lock(owner_.mutex_);
            owner_.cv_.wait(lock, [&] { return owner_.in_flight_ < owner_.limit_; });
            ++owner_.in_flight_;
            owner_.peak_ = std::max(owner_.peak_, owner_.in_flight_);
        }
        ~Slot() {
            {
                std::lock_guard lock(owner_.mutex_);
                --owner_.in_flight_;
            }
            owner_.cv_.notify_one();
        }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        ConcurrencyLimit& owner_;
    };

    int peak() const {
        std::lock_guard lock(mutex_);
        return peak_;
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    int limit_;
    int in_flight_ = 0;
    int peak_ = 0;
};

/// One request/response pair, for the audit log.
struct Exchange {
    nlohmann::json request;
    std::string response;
    std::string error;
};

struct AgentResponse {
    std::string raw_text;
    std::optional<LikertRating> parsed;
    std::optional<std::string> parse_error;
    int attempt_count = 0;
    std::vector<Exchange> exchanges;
};

inline std::string clarification_line(Vocabulary vocab = Vocabulary::InContext) {
    std::string s = "Please answer with exactly one of the following options: ";
    const auto labels = LikertRating::labels(vocab);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) s += ", ";
        s += labels[i];
    }
    return s + ".";
}

/// Sends prompt bundles to a backend, retrying transport failures and
/// unparseable replies. Safe to share across threads.
class Gateway {
public:
    Gateway(ModelConfig config, std::shared_ptr<ChatBackend> backend)
        : config_(std::move(config)), backend_(std::move(backend)),
          limiter_(config_.requests_per_minute), slots_(config_.parallelism_limit) {
        config_.validate();
        if (!backend_) throw Error("gateway needs a backend");
    }

    const ModelConfig& config() const noexcept { return config_; }
    int peak_in_flight() const { return slots_.peak(); }

    /// Parse failures are recorded in the response; transport failures that
    /// survive every retry throw TransportError.
    AgentResponse query(const PromptBundle& bundle) {
        AgentResponse out;
        const int attempts_allowed = 1 + config_.max_retries;
        int transport_failures = 0;
        for (int attempt = 0; attempt < attempts_allowed;) {
            ChatRequest req{config_.model_name, config_.temperature,
                            {{"system", bundle.system_message}, {"user", bundle.user_message}}};
            if (attempt > 0) req.messages.back().content += "\n\n" + clarification_line();

            std::string text;
            try {
                text = send(req);
            } catch (const TransportError& e) {
                out.exchanges.push_back({req.to_json(), "", e.what()});
                if (!e.retryable() || transport_failures >= config_.max_retries) {
                    throw TransportError(std::string(e.rate_limited() ? "rate limit exhausted: "
                                                                      : "transport failure: ") +
                                             e.what(),
                                         false, e.rate_limited());
                }
                backoff(transport_failures++);
                continue;
            }
            ++attempt;
            out.attempt_count = attempt;
            out.raw_text = text;
            out.exchanges.push_back({req.to_json(), text, ""});
            try {
                out.parsed = parse_likert(text, Vocabulary::InContext);
                out.parse_error.reset();
                return out;
            } catch (const ParseError& e) {
                out.parse_error = e.what();
            }
        }
        return out;
    }

private:
    std::string send(const ChatRequest& req) {
        ConcurrencyLimit::Slot slot(slots_);
        if (config_.backend == Backend::Live) limiter_.acquire();
        return backend_->complete(req);
    }

    void backoff(int failures) const {
        if (config_.retry_backoff_ms <= 0) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms << std::min(failures, 6)));
    }

    ModelConfig config_;
    std::shared_ptr<ChatBackend> backend_;
    RateLimiter limiter_;
    ConcurrencyLimit slots_;
};

}  // namespace beliefnet
