/*
 * Copyright 2026 The vdpt Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// HTTP transport for Api: every /api/* request is forwarded verbatim to
// Api::handle; optional static assets (the web client build) are served
// from a directory.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "vdpt/service.hpp"

namespace vdpt {

struct HttpOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = pick a free port
  std::optional<std::filesystem::path> static_dir;
};

class HttpServer {
 public:
  HttpServer(const Api& api, HttpOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; returns the bound port. Throws kIoError when binding fails.
  int bind();
  // Serves until stop() is called from another thread.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vdpt
