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

#include "iqagent/error.hpp"

namespace iqagent {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kUnknownSeverity: return "UnknownSeverity";
    case Errc::kUnknownCategory: return "UnknownCategory";
    case Errc::kUnknownField: return "UnknownField";
    case Errc::kSchemaViolation: return "SchemaViolation";
    case Errc::kUnparseable: return "Unparseable";
    case Errc::kTemplateMissing: return "TemplateMissing";
    case Errc::kQueryEmpty: return "QueryEmpty";
    case Errc::kTimeout: return "Timeout";
    case Errc::kHttpError: return "HttpError";
    case Errc::kReplayMiss: return "ReplayMiss";
    case Errc::kBackendUnsupported: return "BackendUnsupported";
    case Errc::kRegistryEmpty: return "RegistryEmpty";
    case Errc::kUnknownTool: return "UnknownTool";
    case Errc::kDuplicateTool: return "DuplicateTool";
    case Errc::kMalformedDescriptor: return "MalformedDescriptor";
    case Errc::kMissingReference: return "MissingReference";
    case Errc::kAdapterProtocolError: return "AdapterProtocolError";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kImageTooSmall: return "ImageTooSmall";
    case Errc::kImageDecode: return "ImageDecode";
    case Errc::kNonFiniteInput: return "NonFiniteInput";
    case Errc::kDegenerateData: return "DegenerateData";
    case Errc::kDegenerateInput: return "DegenerateInput";
    case Errc::kEmptyScores: return "EmptyScores";
    case Errc::kNoChoiceFound: return "NoChoiceFound";
    case Errc::kLoadError: return "LoadError";
    case Errc::kAllRowsFailed: return "AllRowsFailed";
    case Errc::kConfig: return "Config";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace iqagent
