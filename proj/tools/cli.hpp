#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qcpd::cli {

enum ExitStatus : int {
  kOk = 0,
  kAlarm = 2,
  kUsage = 64,
  kDataError = 65,
  kFitFailure = 70,
  kIoError = 74,
};

/// Entry point behind the qcpd binary; streams are injectable for tests.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace qcpd::cli
