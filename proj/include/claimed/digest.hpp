#ifndef CLAIMED_DIGEST_HPP
#define CLAIMED_DIGEST_HPP

#include <string>
#include <string_view>

namespace claimed {

std::string sha256_hex(std::string_view data);

} // namespace claimed

#endif
