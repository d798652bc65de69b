#include <cstdio>

#include "two_settle/selftest.hpp"

int main() {
    using namespace two_settle;
    int failed = 0;
    selftest::run_all(default_config(), [&](const selftest::CriterionResult& r) {
        std::printf("%s\n", selftest::format_line(r).c_str());
        std::fflush(stdout);
        failed += !r.pass;
    });
    std::printf("%d of 10 criteria failed\n", failed);
    return failed ? 1 : 0;
}
