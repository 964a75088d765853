#include "comet/conduit.hpp"

#include <array>

namespace comet {

namespace {

constexpr std::array<std::pair<ConnectorKind, std::string_view>, 4> kConnectorKinds{{
    {ConnectorKind::message_buffer, "message_buffer"},
    {ConnectorKind::message_queue, "message_queue"},
    {ConnectorKind::buffer_and_reply, "buffer_and_reply"},
    {ConnectorKind::queue_and_callback, "queue_and_callback"},
}};

}  // namespace

std::string_view to_string(ConnectorKind kind) {
  for (const auto& [k, name] : kConnectorKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<ConnectorKind> parse_connector_kind(std::string_view text) {
  for (const auto& [k, name] : kConnectorKinds) {
    if (name == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(End end) { return end == End::sender ? "sender" : "receiver"; }

}  // namespace comet
