#include <httplib.h>

#include <thread>

#include "json_codec.h"
#include "vqc/error.h"
#include "vqc/reviewsvc.h"

namespace vqc {

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kDuplicate: return 409;
    default: return 400;
  }
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  res.status = http_status(code);
  res.set_content(json{{"error", error_code_name(code)}, {"message", message}}.dump(),
                  "application/json");
}

// Runs a handler, turning library errors into JSON error bodies.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::kParse, e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::kParse, "request body is not a JSON object");
  return j;
}

std::string required_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name) || req.get_param_value(name).empty())
    throw Error(ErrorCode::kInvalidArgument, std::string("missing query parameter '") + name + "'");
  return req.get_param_value(name);
}

}  // namespace

struct ReviewServer::Impl {
  httplib::Server server;
  std::thread thread;
};

ReviewServer::ReviewServer(ReviewStore& store, ServeOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto& s = impl_->server;
  ReviewStore* st = &store;

  s.Get("/tasks", guarded([st](const httplib::Request& req, httplib::Response& res) {
    const std::string batch = required_param(req, "batch");
    json tasks = json::array();
    for (const auto& t : st->tasks(batch)) tasks.push_back(json::parse(task_to_client_json(t)));
    res.set_content(json{{"batch", batch}, {"tasks", std::move(tasks)}}.dump(), "application/json");
  }));

  s.Post("/verdicts", guarded([st](const httplib::Request& req, httplib::Response& res) {
    const SubmitOutcome outcome = st->submit(verdict_from_json_line(req.body));
    res.set_content(
        json{{"status", outcome == SubmitOutcome::kStored ? "stored" : "already_stored"}}.dump(),
        "application/json");
  }));

  s.Get("/report", guarded([st](const httplib::Request& req, httplib::Response& res) {
    res.set_content(st->report(required_param(req, "batch")).to_json(), "application/json");
  }));

  s.Get("/crossexam/pending", guarded([st](const httplib::Request&, httplib::Response& res) {
    json tasks = json::array();
    for (const auto& t : st->pending()) tasks.push_back(json::parse(to_json(t)));
    res.set_content(json{{"tasks", std::move(tasks)}}.dump(), "application/json");
  }));

  s.Post(R"(/crossexam/([^/]+)/resolve)",
         guarded([st](const httplib::Request& req, httplib::Response& res) {
           const json body = parse_body(req);
           const std::string action = body.value("action", "");
           Resolution r;
           r.reviewer_id = body.value("reviewer_id", "");
           if (action == "edit") {
             if (!body.contains("new_index") || !body.at("new_index").is_number_integer())
               throw Error(ErrorCode::kInvalidArgument, "edit needs an integer new_index");
             r.edit_index = body.at("new_index").get<int>();
           } else if (action != "confirm") {
             throw Error(ErrorCode::kInvalidArgument, "action must be 'confirm' or 'edit'");
           }
           res.set_content(to_json(st->resolve(req.matches[1].str(), r)), "application/json");
         }));
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind() {
  auto& s = impl_->server;
  if (options_.port == 0) {
    port_ = s.bind_to_any_port(options_.host);
  } else {
    port_ = s.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ < 0)
    throw Error(ErrorCode::kIo, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  return port_;
}

int ReviewServer::start() {
  bind();
  auto& s = impl_->server;
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  s.wait_until_ready();
  return port_;
}

void ReviewServer::run() {
  bind();
  impl_->server.listen_after_bind();
}

void ReviewServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id())
    impl_->thread.join();
}

}  // namespace vqc
