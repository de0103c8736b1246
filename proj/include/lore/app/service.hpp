#pragma once

/** \file service.hpp
 *  \brief HTTP question-answering service.
 *
 *  POST /ask     {"question": string, "top_k"?: int}
 *                200 {"answer", "lor_score", "mean_score", "context_rank", "passage_id", "contexts": [...]}
 *                400 malformed request, 422 no evidence, 503 reader unavailable
 *  GET  /healthz 200 {"status": "ok"}
 */

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "lore/app/config.hpp"
#include "lore/error.hpp"
#include "lore/pipeline.hpp"

namespace lore::app {

class QaService {
 public:
  QaService(const Engine& engine, PipelineConfig config) : engine_(engine), config_(config) {
    config_.validate();
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    server_.Post("/ask", [this](const httplib::Request& req, httplib::Response& res) { ask(req, res); });
  }

  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }

  /// Blocks until stop().
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, {{"error", message}});
  }

  void ask(const httplib::Request& req, httplib::Response& res) const {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      return fail(res, 400, "request body is not valid JSON");
    }
    if (!body.is_object()) return fail(res, 400, "request body must be a JSON object");
    auto q = body.find("question");
    if (q == body.end() || !q->is_string() || q->get<std::string>().find_first_not_of(" \t\r\n") == std::string::npos) {
      return fail(res, 400, "\"question\" must be a non-empty string");
    }
    auto config = config_;
    if (auto k = body.find("top_k"); k != body.end()) {
      if (!k->is_number_integer() || k->get<long long>() < 1 || k->get<long long>() > 100000) {
        return fail(res, 400, "\"top_k\" must be a positive integer");
      }
      config.top_k = k->get<int>();
      config.retrieval_depth = std::max(config.retrieval_depth, config.top_k);
    }
    try {
      const auto trace = answer_question(q->get<std::string>(), config, engine_.indexes(), *engine_.reader);
      nlohmann::ordered_json out{{"answer", trace.selected.text},
                                 {"lor_score", trace.selected.lor_score},
                                 {"mean_score", trace.selected.mean_score},
                                 {"context_rank", trace.selected.context_rank},
                                 {"passage_id", trace.selected.passage_id}};
      auto contexts = nlohmann::ordered_json::array();
      const auto shown = std::min(trace.fused.size(), static_cast<std::size_t>(config.top_k));
      for (std::size_t i = 0; i < shown; ++i) contexts.push_back(to_json(trace.fused[i]));
      out["contexts"] = std::move(contexts);
      reply(res, 200, out);
    } catch (const NoEvidenceError& e) {
      fail(res, 422, e.what());
    } catch (const ReaderError& e) {
      fail(res, 503, e.what());
    } catch (const std::exception& e) {
      fail(res, 500, e.what());
    }
  }

  const Engine& engine_;
  PipelineConfig config_;
  httplib::Server server_;
};

}  // namespace lore::app
