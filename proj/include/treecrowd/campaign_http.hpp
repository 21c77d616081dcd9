#ifndef TREECROWD_CAMPAIGN_HTTP_HPP
#define TREECROWD_CAMPAIGN_HTTP_HPP

// HTTP front end of the campaign service (cpp-httplib).

#include <filesystem>
#include <map>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "treecrowd/campaign.hpp"
#include "treecrowd/records.hpp"
#include "treecrowd/tiler.hpp"

namespace treecrowd {

/// Tile bundles by id, found by scanning a directory for manifest.json files.
class TileStore {
public:
  TileStore() = default;

  explicit TileStore(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
      if (entry.path().filename() != kManifestFile) continue;
      const auto m = nlohmann::json::parse(detail::read_file(entry.path()));
      bundles_[m.at("tile_id").get<std::string>()] = entry.path().parent_path();
    }
  }

  void add(const std::string& tile_id, std::filesystem::path bundle_dir) {
    bundles_[tile_id] = std::move(bundle_dir);
  }

  /// Path of a bundle part ("manifest", "points" or "dtm"), empty if unknown.
  std::filesystem::path part(const std::string& tile_id, const std::string& part) const {
    auto it = bundles_.find(tile_id);
    if (it == bundles_.end()) return {};
    if (part == "manifest") return it->second / kManifestFile;
    const auto m = nlohmann::json::parse(detail::read_file(it->second / kManifestFile));
    if (part == "points") return it->second / m.at("points_file").get<std::string>();
    if (part == "dtm") return it->second / m.at("dtm_file").get<std::string>();
    return {};
  }

  std::size_t size() const { return bundles_.size(); }

private:
  std::map<std::string, std::filesystem::path> bundles_;
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code,
                       const std::string& message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

inline int http_status(ProtocolCode code) {
  switch (code) {
  case ProtocolCode::unknown_job:
  case ProtocolCode::unknown_campaign: return 404;
  case ProtocolCode::expired_lease: return 410;
  case ProtocolCode::not_reserved: return 409;
  case ProtocolCode::invalid_submission: return 400;
  }
  return 500;
}

template <typename Handler>
void guarded(httplib::Response& res, Handler&& handler) {
  try {
    handler();
  } catch (const ProtocolError& e) {
    send_error(res, http_status(e.code()), to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

} // namespace detail

/// Registers the campaign endpoints on `server`. `service` and `tiles` must
/// outlive the server.
inline void mount_campaign_routes(httplib::Server& server, CampaignService& service,
                                  const TileStore& tiles, IntegrationParams params = {}) {
  using detail::guarded;
  using detail::send_error;
  using detail::send_json;

  server.Get("/api/jobs/next", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_param("worker") || req.get_param_value("worker").empty())
        return send_error(res, 400, "bad_request", "missing worker parameter");
      const auto job = service.next_job(req.get_param_value("worker"));
      if (!job) {
        res.status = 204;
        return;
      }
      send_json(res, 200, to_record(*job));
    });
  });

  server.Get(R"(/api/tiles/([^/]+)/(manifest|points|dtm))",
             [&tiles](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const auto path = tiles.part(req.matches[1], req.matches[2]);
                 if (path.empty() || !std::filesystem::exists(path))
                   return send_error(res, 404, "unknown_tile", req.matches[1]);
                 const std::string kind = req.matches[2];
                 res.status = 200;
                 res.set_content(detail::read_file(path),
                                 kind == "manifest" ? "application/json" : "text/plain");
               });
             });

  server.Post(R"(/api/jobs/([^/]+)/alternative)",
              [&service](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] { send_json(res, 200, to_record(service.request_alternative(req.matches[1]))); });
              });

  server.Post(R"(/api/jobs/([^/]+)/submission)",
              [&service](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const auto body = nlohmann::json::parse(req.body);
                  const auto qualification = annotations_from_record(body.at("qualification"));
                  PayloadAnswer payload;
                  const auto& p = body.at("payload");
                  if (p.is_string()) {
                    if (p.get<std::string>() != "no_stems")
                      return send_error(res, 400, "bad_request", "payload must be an array or \"no_stems\"");
                  } else {
                    payload = annotations_from_record(p);
                  }
                  const auto result = service.submit_job(req.matches[1], qualification, payload);
                  send_json(res, 200, {{"status", result.accepted ? "accepted" : "rejected"}, {"reason", result.reason}});
                });
              });

  server.Get(R"(/api/campaigns/([^/]+)/status)",
             [&service](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, to_record(service.campaign_status(req.matches[1]))); });
             });

  server.Post(R"(/api/campaigns/([^/]+)/integrate)",
              [&service, params](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  if (req.matches[1] != service.campaign().campaign_id)
                    throw ProtocolError(ProtocolCode::unknown_campaign, req.matches[1]);
                  nlohmann::ordered_json stems = nlohmann::ordered_json::array();
                  for (const auto& s : service.integrate(params)) stems.push_back(to_record(s));
                  send_json(res, 200, {{"stems", stems}});
                });
              });
}

} // namespace treecrowd

#endif // TREECROWD_CAMPAIGN_HTTP_HPP
