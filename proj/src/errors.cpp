#include "vicon/errors.hpp"

namespace vicon {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Divergence: return 4;
    case ErrorKind::Io: return 5;
  }
  return 1;
}

}  // namespace vicon
