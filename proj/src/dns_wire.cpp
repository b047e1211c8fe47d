#include "admal/dns_wire.hpp"

#include <arpa/inet.h>

#include <cstdio>
#include <string_view>

#include "admal/error.hpp"

namespace admal::dns {
namespace {

constexpr std::size_t kHeaderSize = 12;
constexpr std::size_t kMaxNameWire = 255;
constexpr int kMaxPointerHops = 64;

[[noreturn]] void malformed(const char* what) { fail(ErrorCode::MalformedMessage, what); }

// Uncompressed wire name to presentation text; unprintable bytes as \DDD.
std::string wire_to_text(const std::vector<std::uint8_t>& wire) {
  std::string out;
  std::size_t i = 0;
  while (i < wire.size() && wire[i] != 0) {
    const std::size_t len = wire[i];
    if (!out.empty()) out.push_back('.');
    for (std::size_t k = 1; k <= len && i + k < wire.size(); ++k) {
      const auto c = wire[i + k];
      if (c <= 0x20 || c >= 0x7F || c == '.' || c == '\\') {
        char esc[5];
        std::snprintf(esc, sizeof(esc), "\\%03u", static_cast<unsigned>(c));
        out += esc;
      } else {
        out.push_back(static_cast<char>(c));
      }
    }
    i += len + 1;
  }
  return out.empty() ? "." : out;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> buf, std::size_t pos = 0) : buf_(buf), pos_(pos) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>((buf_[pos_] << 8) | buf_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  // Decompressed wire form of the name at the cursor (labels + root byte).
  std::vector<std::uint8_t> name_wire() {
    std::vector<std::uint8_t> out;
    std::size_t cursor = pos_;
    bool jumped = false;
    int hops = 0;
    while (true) {
      if (cursor >= buf_.size()) malformed("name overruns message");
      const std::uint8_t len = buf_[cursor];
      if ((len & 0xC0) == 0xC0) {
        if (cursor + 1 >= buf_.size()) malformed("truncated compression pointer");
        const std::size_t target = static_cast<std::size_t>((len & 0x3F) << 8) | buf_[cursor + 1];
        if (!jumped) pos_ = cursor + 2;
        jumped = true;
        if (++hops > kMaxPointerHops || target >= buf_.size() || target == cursor) {
          malformed("compression pointer loop");
        }
        cursor = target;
        continue;
      }
      if ((len & 0xC0) != 0) malformed("unsupported label type");
      if (out.size() + len + 1u > kMaxNameWire) malformed("name too long");
      if (cursor + 1 + len > buf_.size()) malformed("label overruns message");
      out.insert(out.end(), buf_.begin() + static_cast<std::ptrdiff_t>(cursor),
                 buf_.begin() + static_cast<std::ptrdiff_t>(cursor + 1 + len));
      if (len == 0) {
        if (!jumped) pos_ = cursor + 1;
        break;
      }
      cursor += 1 + len;
    }
    return out;
  }

  std::string name() { return wire_to_text(name_wire()); }

  std::size_t pos() const { return pos_; }
  std::span<const std::uint8_t> buffer() const { return buf_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) malformed("message truncated");
  }

  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v & 0xFFFF));
}

void put_name(std::vector<std::uint8_t>& out, std::string_view name) {
  if (name == "." || name.empty()) {
    out.push_back(0);
    return;
  }
  std::size_t pos = 0;
  while (pos <= name.size()) {
    auto dot = name.find('.', pos);
    auto label = name.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
    if (label.empty() || label.size() > 63) fail(ErrorCode::InvalidArgument, "bad label in name");
    out.push_back(static_cast<std::uint8_t>(label.size()));
    out.insert(out.end(), label.begin(), label.end());
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  out.push_back(0);
}

ResourceRecord read_rr(Reader& r) {
  ResourceRecord rr;
  rr.name = r.name();
  rr.type = r.u16();
  rr.klass = r.u16();
  rr.ttl = r.u32();
  const auto rdlen = r.u16();
  const auto rdata_start = r.pos();
  if (rr.type == static_cast<std::uint16_t>(QType::CNAME) ||
      rr.type == static_cast<std::uint16_t>(QType::NS)) {
    // Expand compressed names so rdata stays meaningful out of context.
    Reader at(r.buffer(), rdata_start);
    rr.rdata = at.name_wire();
    if (at.pos() != rdata_start + rdlen) malformed("rdata length mismatch");
    r.bytes(rdlen);
  } else {
    rr.rdata = r.bytes(rdlen);
  }
  return rr;
}

}  // namespace

std::string ResourceRecord::rdata_text() const {
  if ((type == static_cast<std::uint16_t>(QType::A) && rdata.size() == 4) ||
      (type == static_cast<std::uint16_t>(QType::AAAA) && rdata.size() == 16)) {
    return ip_text(rdata).value_or("");
  }
  if (type == static_cast<std::uint16_t>(QType::CNAME) || type == static_cast<std::uint16_t>(QType::NS)) {
    return wire_to_text(rdata);
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (auto b : rdata) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::vector<std::uint8_t> build_query(const Domain& domain, QType qtype, std::uint16_t id, bool edns) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + domain.str().size() + 2 + 4 + (edns ? 11 : 0));
  put16(out, id);
  put16(out, 0x0100);  // RD
  put16(out, 1);
  put16(out, 0);
  put16(out, 0);
  put16(out, edns ? 1 : 0);
  put_name(out, domain.str());
  put16(out, static_cast<std::uint16_t>(qtype));
  put16(out, 1);
  if (edns) {
    out.push_back(0);  // root owner
    put16(out, static_cast<std::uint16_t>(QType::OPT));
    put16(out, kEdnsUdpSize);
    put32(out, 0);
    put16(out, 0);
  }
  return out;
}

Message parse_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) malformed("truncated header");
  Reader r(bytes);
  Message m;
  m.id = r.u16();
  const auto flags = r.u16();
  m.qr = flags & 0x8000;
  m.opcode = static_cast<std::uint8_t>((flags >> 11) & 0xF);
  m.aa = flags & 0x0400;
  m.tc = flags & 0x0200;
  m.rd = flags & 0x0100;
  m.ra = flags & 0x0080;
  m.ad = flags & 0x0020;
  m.cd = flags & 0x0010;
  m.rcode = flags & 0xF;
  const auto qd = r.u16();
  const auto an = r.u16();
  const auto ns = r.u16();
  const auto ar = r.u16();
  for (unsigned i = 0; i < qd; ++i) {
    Question q;
    q.name = r.name();
    q.type = r.u16();
    q.klass = r.u16();
    m.questions.push_back(std::move(q));
  }
  for (unsigned i = 0; i < an; ++i) m.answers.push_back(read_rr(r));
  for (unsigned i = 0; i < ns; ++i) m.authority.push_back(read_rr(r));
  for (unsigned i = 0; i < ar; ++i) {
    auto rr = read_rr(r);
    if (rr.type == static_cast<std::uint16_t>(QType::OPT)) {
      // Extended rcode lives in the upper 8 bits of the OPT TTL.
      m.rcode |= static_cast<int>((rr.ttl >> 24) & 0xFF) << 4;
    }
    m.additional.push_back(std::move(rr));
  }
  return m;
}

DnsResponse parse_response(std::span<const std::uint8_t> bytes) {
  DnsResponse resp;
  resp.msg = parse_message(bytes);
  return resp;
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  std::vector<std::uint8_t> out;
  put16(out, msg.id);
  std::uint16_t flags = 0;
  if (msg.qr) flags |= 0x8000;
  flags |= static_cast<std::uint16_t>((msg.opcode & 0xF) << 11);
  if (msg.aa) flags |= 0x0400;
  if (msg.tc) flags |= 0x0200;
  if (msg.rd) flags |= 0x0100;
  if (msg.ra) flags |= 0x0080;
  if (msg.ad) flags |= 0x0020;
  if (msg.cd) flags |= 0x0010;
  flags |= static_cast<std::uint16_t>(msg.rcode & 0xF);
  put16(out, flags);
  put16(out, static_cast<std::uint16_t>(msg.questions.size()));
  put16(out, static_cast<std::uint16_t>(msg.answers.size()));
  put16(out, static_cast<std::uint16_t>(msg.authority.size()));
  put16(out, static_cast<std::uint16_t>(msg.additional.size()));
  for (const auto& q : msg.questions) {
    put_name(out, q.name);
    put16(out, q.type);
    put16(out, q.klass);
  }
  const std::string first_q = msg.questions.empty() ? std::string{} : msg.questions.front().name;
  auto put_rr = [&](const ResourceRecord& rr) {
    if (!first_q.empty() && rr.name == first_q) {
      put16(out, static_cast<std::uint16_t>(0xC000 | kHeaderSize));
    } else {
      put_name(out, rr.name);
    }
    put16(out, rr.type);
    put16(out, rr.klass);
    put32(out, rr.ttl);
    put16(out, static_cast<std::uint16_t>(rr.rdata.size()));
    out.insert(out.end(), rr.rdata.begin(), rr.rdata.end());
  };
  for (const auto& rr : msg.answers) put_rr(rr);
  for (const auto& rr : msg.authority) put_rr(rr);
  for (const auto& rr : msg.additional) put_rr(rr);
  return out;
}

std::optional<std::string> ip_text(std::span<const std::uint8_t> rdata) {
  char buf[INET6_ADDRSTRLEN];
  if (rdata.size() == 4) {
    if (!inet_ntop(AF_INET, rdata.data(), buf, sizeof(buf))) return std::nullopt;
    return std::string(buf);
  }
  if (rdata.size() == 16) {
    if (!inet_ntop(AF_INET6, rdata.data(), buf, sizeof(buf))) return std::nullopt;
    return std::string(buf);
  }
  return std::nullopt;
}

std::optional<std::vector<std::uint8_t>> parse_ip(std::string_view text) {
  std::string s(text);
  std::vector<std::uint8_t> out(16);
  if (inet_pton(AF_INET, s.c_str(), out.data()) == 1) {
    out.resize(4);
    return out;
  }
  if (inet_pton(AF_INET6, s.c_str(), out.data()) == 1) return out;
  return std::nullopt;
}

std::optional<std::string> canonical_ip(std::string_view text) {
  auto bytes = parse_ip(text);
  if (!bytes) return std::nullopt;
  return ip_text(*bytes);
}

}  // namespace admal::dns
