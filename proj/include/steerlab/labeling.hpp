#pragma once

// Optional external labeling of SAE features. Kept apart from report.hpp so
// dashboard users do not pull in HTTP headers.

#include "steerlab/report.hpp"

#include "steerlab/remote.hpp"

namespace steerlab {

// Sends the dossier's snippets to a completion service in a fixed prompt
// template and returns its one-line label. Offline mode (no endpoint) returns
// "unlabeled" deterministically and never touches the network.
inline std::string label_feature(const FeatureDossier& dossier, const LabelClientConfig& client) {
  if (dossier.snippets.empty())
    throw ContractError("label_feature: dossier has no snippets to label");
  if (client.endpoint.empty()) return "unlabeled";

  nlohmann::json req = {{"feature_id", dossier.feature_id},
                        {"prompt", feature_label_prompt(dossier)}};
  std::string req_body = req.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  httplib::Client http(client.endpoint);
  http.set_connection_timeout(5, 0);
  http.set_read_timeout(60, 0);
  httplib::Headers headers;
  if (!client.token.empty()) headers.emplace("Authorization", "Bearer " + client.token);
  auto res = http.Post("/label", headers, req_body, "application/json");
  if (!res)
    throw BackendError("label request transport error: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendError("label request rejected: HTTP " + std::to_string(res->status));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("label response is not valid JSON: ") + e.what());
  }
  if (!j.contains("label")) throw ProtocolError("label response missing \"label\": " + res->body);
  return j.at("label").get<std::string>();
}

}  // namespace steerlab
