#ifndef CLAIMED_UTIL_HPP
#define CLAIMED_UTIL_HPP

#include <string>

namespace claimed {

// 2026-08-14T12:00:00Z
std::string now_utc_iso();

std::string random_hex(std::size_t digits);

} // namespace claimed

#endif
