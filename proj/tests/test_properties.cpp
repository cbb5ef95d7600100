// Copyright 2026 The attnrep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "property_suite.hpp"

using namespace attnrep::props;

TEST_CASE("structural property suites hold") {
  for (const SuiteResult& s : all_suites(100, 2026)) {
    INFO(s.name << ": " << s.first_violation);
    CHECK(s.cases == 100);
    CHECK(s.violations == 0);
  }
}
