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

#include "vdpt/http_server.hpp"

#include <algorithm>
#include <cctype>

#include "httplib.h"

namespace vdpt {

struct HttpServer::Impl {
  const Api& api;
  HttpOptions options;
  httplib::Server server;
  int port = -1;

  Impl(const Api& a, HttpOptions o) : api(a), options(std::move(o)) {}

  void forward(const httplib::Request& req, httplib::Response& res) const {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [name, value] : req.headers) {
      std::string lower = name;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      r.headers[lower] = value;
    }
    const ApiResponse out = api.handle(r);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  }
};

HttpServer::HttpServer(const Api& api, HttpOptions options)
    : impl_(std::make_unique<Impl>(api, std::move(options))) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->forward(req, res); };
  const std::string pattern = R"(/api(/.*)?)";
  impl_->server.Get(pattern, handler);
  impl_->server.Post(pattern, handler);
  impl_->server.Patch(pattern, handler);
  impl_->server.Put(pattern, handler);
  impl_->server.Delete(pattern, handler);
  if (impl_->options.static_dir) {
    if (!impl_->server.set_mount_point("/", impl_->options.static_dir->string())) {
      throw Error(ErrorCode::kIoError, "static directory " + impl_->options.static_dir->string() + " not found");
    }
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  const HttpOptions& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) {
    throw Error(ErrorCode::kIoError, "cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void HttpServer::serve() {
  if (impl_->port < 0) bind();
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace vdpt
