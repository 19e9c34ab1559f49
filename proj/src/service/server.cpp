#include "dlot/service/server.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/version.hpp>
#include <boost/beast/websocket.hpp>

#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "dlot/error.hpp"
#include "dlot/export.hpp"

namespace dlot::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

std::pair<std::string, std::uint16_t> parse_address(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon + 1 == text.size()) {
        throw Error(ErrorCode::kInvalidArgument, "address must look like host:port, got '" + text + "'");
    }
    std::string host = text.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    if (host.empty()) host = "0.0.0.0";
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1 || port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument, "invalid port in '" + text + "'");
    }
    return {host, static_cast<std::uint16_t>(port)};
}

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

struct Target {
    std::vector<std::string> segments;
    std::map<std::string, std::string> query;
};

std::string percent_decode(std::string_view in) {
    std::string out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] == '%' && i + 2 < in.size() && std::isxdigit(static_cast<unsigned char>(in[i + 1])) &&
            std::isxdigit(static_cast<unsigned char>(in[i + 2]))) {
            out += static_cast<char>(std::stoi(std::string(in.substr(i + 1, 2)), nullptr, 16));
            i += 2;
        } else if (in[i] == '+') {
            out += ' ';
        } else {
            out += in[i];
        }
    }
    return out;
}

Target parse_target(std::string_view target) {
    Target t;
    const auto q = target.find('?');
    const std::string_view path = target.substr(0, q);
    std::size_t pos = 0;
    while (pos <= path.size()) {
        const auto slash = path.find('/', pos);
        const auto seg = path.substr(pos, slash == std::string_view::npos ? std::string_view::npos : slash - pos);
        if (!seg.empty()) t.segments.push_back(percent_decode(seg));
        if (slash == std::string_view::npos) break;
        pos = slash + 1;
    }
    if (q != std::string_view::npos) {
        std::string_view rest = target.substr(q + 1);
        while (!rest.empty()) {
            const auto amp = rest.find('&');
            const auto pair = rest.substr(0, amp);
            const auto eq = pair.find('=');
            t.query[percent_decode(pair.substr(0, eq))] =
                eq == std::string_view::npos ? std::string{} : percent_decode(pair.substr(eq + 1));
            if (amp == std::string_view::npos) break;
            rest = rest.substr(amp + 1);
        }
    }
    return t;
}

Response make_response(const Request& req, http::status status, std::string body, std::string content_type) {
    Response res{status, req.version()};
    res.set(http::field::server, "dlot");
    res.set(http::field::content_type, content_type);
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
}

Response json_response(const Request& req, http::status status, const Json& doc) {
    return make_response(req, status, doc.dump(), "application/json");
}

Response error_response(const Request& req, http::status status, const std::string& reason, const std::string& message) {
    return json_response(req, status, Json{{"error", reason}, {"message", message}});
}

http::status status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::kNotFound: return http::status::not_found;
        case ErrorCode::kConflict:
        case ErrorCode::kAlreadyRunning:
        case ErrorCode::kSessionEnded:
        case ErrorCode::kNotRunning:
        case ErrorCode::kConfigFrozen: return http::status::conflict;
        case ErrorCode::kUnauthorized: return http::status::unauthorized;
        case ErrorCode::kIo: return http::status::service_unavailable;
        default: return http::status::bad_request;
    }
}

http::status status_for(RejectReason reason) {
    switch (reason) {
        case RejectReason::kBadToken: return http::status::unauthorized;
        case RejectReason::kKeyConflict: return http::status::conflict;
        case RejectReason::kReadOnly: return http::status::service_unavailable;
        default: return http::status::unprocessable_entity;
    }
}

std::string bearer_token(const Request& req) {
    const auto auth = req[http::field::authorization];
    constexpr std::string_view kBearer = "Bearer ";
    if (auth.size() > kBearer.size() && auth.substr(0, kBearer.size()) == kBearer) {
        return std::string(auth.substr(kBearer.size()));
    }
    return std::string(req["X-Observer-Token"]);
}

const char* mime_type(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
    if (ext == ".css") return "text/css; charset=utf-8";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".ico") return "image/x-icon";
    if (ext == ".wav") return "audio/wav";
    return "application/octet-stream";
}

constexpr std::string_view kBuiltinIndex = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>dlot</title></head>
<body><h1>dlot observation server</h1>
<p>No observer UI bundle is installed (start the server with <code>--ui-dir</code>).</p>
<p>API: POST /sessions, GET /sessions/{id}, POST /sessions/{id}/observers, POST /sessions/{id}/start,
POST /sessions/{id}/observations, POST /sessions/{id}/end, GET /sessions/{id}/export?format=csv|xlsx,
WebSocket GET /sessions/{id}/stream?token=...</p>
</body></html>
)";

SubmissionRequest parse_submission(const Json& body) {
    if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "submission must be a JSON object");
    SubmissionRequest r;
    const auto idx = body.find("prompt_index");
    if (idx == body.end() || !idx->is_number_unsigned()) {
        throw Error(ErrorCode::kInvalidArgument, "prompt_index must be a non-negative integer");
    }
    r.prompt_index = idx->get<std::uint64_t>();
    if (const auto s = body.find("subject_id"); s != body.end() && !s->is_null()) {
        if (!s->is_string()) throw Error(ErrorCode::kInvalidArgument, "subject_id must be a string");
        r.subject_id = s->get<std::string>();
    }
    if (const auto st = body.find("status"); st != body.end()) {
        const auto status = st->is_string() ? observation_status_from_string(st->get<std::string>()) : std::nullopt;
        if (!status || *status == ObservationStatus::kMissed) {
            throw Error(ErrorCode::kInvalidArgument, "status must be 'logged' or 'skipped'");
        }
        r.status = *status;
    }
    if (const auto sel = body.find("selections"); sel != body.end()) {
        if (!sel->is_object()) throw Error(ErrorCode::kInvalidArgument, "selections must be an object");
        for (const auto& [group, labels] : sel->items()) {
            if (!labels.is_array()) throw Error(ErrorCode::kInvalidArgument, "selections." + group + " must be an array");
            auto& chosen = r.selections[group];
            for (const auto& label : labels) {
                if (!label.is_string()) throw Error(ErrorCode::kInvalidArgument, "labels must be strings");
                chosen.insert(label.get<std::string>());
            }
        }
    }
    if (const auto sent = body.find("client_sent_at"); sent != body.end() && sent->is_string()) {
        r.client_sent_at = sent->get<std::string>();
    }
    return r;
}

}  // namespace

struct Server::Impl {
    SessionRegistry& registry;
    ServerOptions options;
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::vector<std::thread> threads;
    std::thread ticker;
    std::mutex stop_mu;
    std::condition_variable stop_cv;
    bool stopping = false;
    bool running = false;

    Impl(SessionRegistry& r, ServerOptions o) : registry(r), options(std::move(o)) {}

    void do_accept();
    Response handle(const Request& req);
    Response handle_session(const Request& req, const Target& t, const std::shared_ptr<SessionHost>& host);
    Response serve_static(const Request& req, const Target& t);
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, std::shared_ptr<SessionHost> host, std::string token, Millis heartbeat)
        : ws_(std::move(socket)), timer_(ws_.get_executor()), host_(std::move(host)), token_(std::move(token)),
          heartbeat_(heartbeat) {}

    void run(Request req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        std::weak_ptr<WsSession> weak = shared_from_this();
        auto executor = ws_.get_executor();
        EventSink sink = [weak, executor](const StreamEvent& ev) {
            net::post(executor, [weak, ev] {
                if (auto self = weak.lock()) self->enqueue(ev);
            });
        };
        if (!host_) {
            enqueue({Json{{"type", "error"}, {"reason", "not_found"}}.dump(), true});
            return;
        }
        try {
            subscription_ = host_->subscribe(token_, sink);
            subscribed_ = subscription_ != 0;
        } catch (const Error& e) {
            enqueue({Json{{"type", "error"}, {"reason", "unauthorized"}, {"message", e.what()}}.dump(), true});
            return;
        }
        arm_heartbeat();
        do_read();
    }

    void arm_heartbeat() {
        timer_.expires_after(heartbeat_);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->closing_) return;
            self->enqueue({self->host_->heartbeat(), false});
            self->arm_heartbeat();
        });
    }

    void do_read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->shutdown();
                return;
            }
            self->buffer_.consume(self->buffer_.size());
            self->do_read();
        });
    }

    void enqueue(const StreamEvent& ev) {
        if (closing_) return;
        if (ev.terminal) closing_ = true;
        queue_.push_back(ev);
        if (queue_.size() == 1) do_write();
    }

    void do_write() {
        ws_.text(true);
        ws_.async_write(net::buffer(queue_.front().json),
                        [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_write(ec); });
    }

    void on_write(beast::error_code ec) {
        if (ec) {
            shutdown();
            return;
        }
        const bool terminal = queue_.front().terminal;
        queue_.pop_front();
        if (terminal) {
            shutdown();
            ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
            return;
        }
        if (!queue_.empty()) do_write();
    }

    void shutdown() {
        closing_ = true;
        timer_.cancel();
        if (subscribed_ && host_) host_->unsubscribe(subscription_);
        subscribed_ = false;
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer timer_;
    beast::flat_buffer buffer_;
    std::shared_ptr<SessionHost> host_;
    std::string token_;
    Millis heartbeat_;
    std::deque<StreamEvent> queue_;
    std::uint64_t subscription_ = 0;
    bool subscribed_ = false;
    bool closing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

    void run() {
        net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
    }

private:
    void do_read() {
        parser_.emplace();
        parser_->body_limit(8 * 1024 * 1024);
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, *parser_,
                         beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        Request req = parser_->release();
        if (websocket::is_upgrade(req)) {
            const Target t = parse_target(req.target());
            std::shared_ptr<SessionHost> host;
            if (t.segments.size() == 3 && t.segments[0] == "sessions" && t.segments[2] == "stream") {
                host = server_.registry.find(t.segments[1]);
            }
            const auto token = t.query.count("token") ? t.query.at("token") : std::string{};
            stream_.expires_never();
            std::make_shared<WsSession>(stream_.release_socket(), std::move(host), token,
                                        server_.options.heartbeat_interval)
                ->run(std::move(req));
            return;
        }
        response_ = std::make_shared<Response>(server_.handle(req));
        http::async_write(stream_, *response_,
                          beast::bind_front_handler(&HttpSession::on_write, shared_from_this(),
                                                    response_->need_eof()));
    }

    void on_write(bool close, beast::error_code ec, std::size_t) {
        if (ec) return;
        if (close) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        response_.reset();
        do_read();
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
    std::shared_ptr<Response> response_;
    Server::Impl& server_;
};

}  // namespace

void Server::Impl::do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (ec == net::error::operation_aborted) return;
        } else {
            std::make_shared<HttpSession>(std::move(socket), *this)->run();
        }
        do_accept();
    });
}

Response Server::Impl::handle(const Request& req) {
    const Target t = parse_target(req.target());
    try {
        if (t.segments.empty() || t.segments[0] != "sessions") return serve_static(req, t);
        if (t.segments.size() == 1) {
            if (req.method() == http::verb::get) {
                Json list = Json::array();
                for (const auto& host : registry.all()) list.push_back(host->status_json());
                return json_response(req, http::status::ok, Json{{"sessions", std::move(list)}});
            }
            if (req.method() != http::verb::post) {
                return error_response(req, http::status::method_not_allowed, "method_not_allowed", "use POST");
            }
            const Json doc = Json::parse(req.body(), nullptr, false);
            if (doc.is_discarded()) {
                return json_response(req, http::status::bad_request,
                                     Json{{"error", "validation"},
                                          {"violations", Json::array({{{"path", "$"}, {"message", "document is not valid JSON"}}})}});
            }
            auto created = registry.create(doc);
            if (!created.host) {
                Json violations = Json::array();
                for (const auto& v : created.violations) violations.push_back({{"path", v.path}, {"message", v.message}});
                return json_response(req, http::status::bad_request,
                                     Json{{"error", "validation"}, {"violations", std::move(violations)}});
            }
            return json_response(req, http::status::created, Json{{"session_id", created.host->session_id()}});
        }
        auto host = registry.find(t.segments[1]);
        if (!host) return error_response(req, http::status::not_found, "not_found", "no session '" + t.segments[1] + "'");
        return handle_session(req, t, host);
    } catch (const Error& e) {
        return error_response(req, status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return error_response(req, http::status::internal_server_error, "internal", e.what());
    }
}

Response Server::Impl::handle_session(const Request& req, const Target& t, const std::shared_ptr<SessionHost>& host) {
    const auto method = req.method();
    auto expect = [&](http::verb verb) {
        if (method != verb) throw Error(ErrorCode::kInvalidArgument, "method not allowed for this route");
    };
    if (t.segments.size() == 2) {
        expect(http::verb::get);
        return json_response(req, http::status::ok, host->status_json());
    }
    if (t.segments.size() != 3) return error_response(req, http::status::not_found, "not_found", "no such route");
    const std::string& action = t.segments[2];

    if (action == "observers") {
        expect(http::verb::post);
        const Json body = Json::parse(req.body(), nullptr, false);
        if (!body.is_object() || !body.contains("observer_id") || !body["observer_id"].is_string()) {
            return error_response(req, http::status::bad_request, "invalid_argument", "body needs observer_id");
        }
        const auto observer = body["observer_id"].get<std::string>();
        const auto token = host->register_observer(observer);
        return json_response(req, http::status::created, Json{{"observer_id", observer}, {"token", token}});
    }
    if (action == "start") {
        expect(http::verb::post);
        const Timestamp at = host->start();
        return json_response(req, http::status::ok, Json{{"started_at", format_iso8601(at)}});
    }
    if (action == "end") {
        expect(http::verb::post);
        const Timestamp at = host->end();
        return json_response(req, http::status::ok, Json{{"ended_at", format_iso8601(at)}});
    }
    if (action == "observations") {
        expect(http::verb::post);
        const Json body = Json::parse(req.body(), nullptr, false);
        if (body.is_discarded()) return error_response(req, http::status::bad_request, "invalid_argument", "body is not JSON");
        const SubmitResult r = host->submit(bearer_token(req), parse_submission(body));
        if (r.accepted) {
            return json_response(req, http::status::ok,
                                 Json{{"accepted", true},
                                      {"seq", r.seq},
                                      {"logged_at", format_iso8601(r.logged_at)},
                                      {"duplicate", r.duplicate}});
        }
        return json_response(req, status_for(r.reason),
                             Json{{"accepted", false}, {"reason", to_string(r.reason)}, {"message", r.message}});
    }
    if (action == "export") {
        expect(http::verb::get);
        const auto format = t.query.count("format") ? t.query.at("format") : std::string("csv");
        const SessionState state = host->snapshot();
        const auto rows = to_rows(state);
        Response res;
        if (format == "csv") {
            res = make_response(req, http::status::ok, write_csv(state.config().scheme, rows), "text/csv; charset=utf-8");
        } else if (format == "xlsx") {
            res = make_response(req, http::status::ok, write_xlsx(state.config().scheme, rows),
                                "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet");
        } else {
            return error_response(req, http::status::bad_request, "invalid_argument", "format must be csv or xlsx");
        }
        res.set(http::field::content_disposition,
                "attachment; filename=\"" + host->session_id() + "." + format + "\"");
        return res;
    }
    if (action == "stream") {
        return error_response(req, http::status::upgrade_required, "upgrade_required", "open this route as a WebSocket");
    }
    return error_response(req, http::status::not_found, "not_found", "no such route");
}

Response Server::Impl::serve_static(const Request& req, const Target& t) {
    if (req.method() != http::verb::get && req.method() != http::verb::head) {
        return error_response(req, http::status::method_not_allowed, "method_not_allowed", "static assets are GET only");
    }
    std::filesystem::path rel;
    for (const auto& seg : t.segments) {
        if (seg == ".." || seg == "." || seg.find('\\') != std::string::npos) {
            return error_response(req, http::status::bad_request, "invalid_argument", "illegal path");
        }
        rel /= seg;
    }
    if (rel.empty()) rel = "index.html";
    if (options.ui_dir.empty()) {
        if (rel == "index.html") return make_response(req, http::status::ok, std::string(kBuiltinIndex), "text/html; charset=utf-8");
        return error_response(req, http::status::not_found, "not_found", "no such asset");
    }
    const auto path = options.ui_dir / rel;
    std::ifstream in(path, std::ios::binary);
    if (!in || std::filesystem::is_directory(path)) {
        return error_response(req, http::status::not_found, "not_found", "no such asset");
    }
    std::ostringstream body;
    body << in.rdbuf();
    return make_response(req, http::status::ok, std::move(body).str(), mime_type(path));
}

Server::Server(SessionRegistry& registry, ServerOptions options)
    : impl_(std::make_unique<Impl>(registry, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
    auto& i = *impl_;
    const tcp::endpoint endpoint{net::ip::make_address(i.options.address), i.options.port};
    i.acceptor.open(endpoint.protocol());
    i.acceptor.set_option(net::socket_base::reuse_address(true));
    i.acceptor.bind(endpoint);
    i.acceptor.listen(net::socket_base::max_listen_connections);
    bound_port_ = i.acceptor.local_endpoint().port();
    i.do_accept();
    i.running = true;
    for (std::size_t n = 0; n < std::max<std::size_t>(1, i.options.threads); ++n) {
        i.threads.emplace_back([&i] { i.ioc.run(); });
    }
    if (i.options.tick_interval.count() > 0) {
        i.ticker = std::thread([&i] {
            std::unique_lock lock(i.stop_mu);
            while (!i.stopping) {
                lock.unlock();
                i.registry.tick_all();
                lock.lock();
                i.stop_cv.wait_for(lock, i.options.tick_interval, [&i] { return i.stopping; });
            }
        });
    }
}

void Server::stop() {
    if (!impl_ || !impl_->running) return;
    auto& i = *impl_;
    {
        std::lock_guard lock(i.stop_mu);
        i.stopping = true;
    }
    i.stop_cv.notify_all();
    net::post(i.ioc, [&i] {
        beast::error_code ec;
        i.acceptor.close(ec);
    });
    i.ioc.stop();
    for (auto& t : i.threads) t.join();
    i.threads.clear();
    if (i.ticker.joinable()) i.ticker.join();
    i.running = false;
}

void Server::wait() {
    auto& i = *impl_;
    std::unique_lock lock(i.stop_mu);
    i.stop_cv.wait(lock, [&i] { return i.stopping; });
}

}  // namespace dlot::service
