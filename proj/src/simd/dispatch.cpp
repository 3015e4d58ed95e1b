// Copyright 2026 The cddpm Authors.
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

#include <atomic>
#include <cstdlib>
#include <string>

#include "cddpm/simd.hpp"

namespace cddpm::simd {

#ifdef CDDPM_HAVE_AVX2
const KernelTable& avx2_kernel_table();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(CDDPM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("CDDPM_SIMD"); env && std::string(env) == "scalar") {
    return &scalar_kernels();
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable* avx2_kernels() {
#ifdef CDDPM_HAVE_AVX2
  static const bool ok = cpu_has_avx2();
  return ok ? &avx2_kernel_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool set_backend(Backend b) {
  const KernelTable* t = b == Backend::kScalar ? &scalar_kernels() : avx2_kernels();
  if (!t) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace cddpm::simd
