#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace comet {

/// Opaque, process-unique identifier. `Tag` supplies the printable prefix.
template <typename Tag>
class Id {
 public:
  constexpr Id() = default;
  constexpr explicit Id(std::uint64_t value) : value_(value) {}

  static Id next() {
    static std::atomic<std::uint64_t> counter{0};
    return Id(counter.fetch_add(1, std::memory_order_relaxed) + 1);
  }

  constexpr std::uint64_t value() const { return value_; }
  constexpr bool valid() const { return value_ != 0; }
  std::string str() const { return std::string(Tag::prefix) + ":" + std::to_string(value_); }

  friend constexpr auto operator<=>(Id, Id) = default;

 private:
  std::uint64_t value_ = 0;
};

struct ContextTag { static constexpr const char* prefix = "context"; };
struct ComponentTag { static constexpr const char* prefix = "component"; };
struct ConduitTag { static constexpr const char* prefix = "conduit"; };
struct ConnectorTag { static constexpr const char* prefix = "connector"; };
struct EndpointTag { static constexpr const char* prefix = "endpoint"; };
struct ClientTag { static constexpr const char* prefix = "client"; };
struct EnvelopeTag { static constexpr const char* prefix = "envelope"; };

using ContextId = Id<ContextTag>;
using ComponentId = Id<ComponentTag>;
using ConduitId = Id<ConduitTag>;
using ConnectorId = Id<ConnectorTag>;
using EndpointId = Id<EndpointTag>;
using ClientId = Id<ClientTag>;
using EnvelopeId = Id<EnvelopeTag>;

}  // namespace comet

template <typename Tag>
struct std::hash<comet::Id<Tag>> {
  std::size_t operator()(comet::Id<Tag> id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value());
  }
};
