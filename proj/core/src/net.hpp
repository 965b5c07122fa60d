/*
 * Copyright 2026 The iqagent Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Components that link cpp-httplib. Kept behind one translation unit.

#include <chrono>
#include <memory>
#include <string>

#include "iqagent/tools.hpp"

namespace iqagent::net {

std::unique_ptr<AdapterClient> make_http_adapter_client(const std::string& base_url,
                                                        std::chrono::milliseconds timeout);

}  // namespace iqagent::net
