#include "minegan/kernels.hpp"

#include "minegan/errors.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace minegan::kernels {
namespace {

bool cpu_supports(Backend backend) {
    switch (backend) {
    case Backend::scalar:
        return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(__i386__)
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
        return true;
#else
        return false;
#endif
    }
    return false;
}

const Table* compiled(Backend backend) {
    switch (backend) {
    case Backend::scalar: return detail::scalar_table();
    case Backend::avx2: return detail::avx2_table();
    case Backend::neon: return detail::neon_table();
    }
    return nullptr;
}

const Table* initial_table() {
    if (const char* env = std::getenv("MINEGAN_KERNELS")) {
        const std::string_view text(env);
        if (text != "auto" && !text.empty()) {
            auto backend = parse_backend(text);
            if (!backend) throw UsageError("MINEGAN_KERNELS: unknown backend '" + std::string(text) + "'");
            if (!available(*backend)) {
                throw UsageError("MINEGAN_KERNELS: backend '" + std::string(text) + "' is not available");
            }
            return compiled(*backend);
        }
    }
    return compiled(best_available());
}

std::atomic<const Table*> g_active{nullptr};

} // namespace

bool available(Backend backend) { return compiled(backend) != nullptr && cpu_supports(backend); }

std::vector<Backend> available_backends() {
    std::vector<Backend> out;
    for (auto b : {Backend::scalar, Backend::avx2, Backend::neon}) {
        if (available(b)) out.push_back(b);
    }
    return out;
}

Backend best_available() {
    if (available(Backend::avx2)) return Backend::avx2;
    if (available(Backend::neon)) return Backend::neon;
    return Backend::scalar;
}

const Table& table(Backend backend) {
    if (!available(backend)) throw UsageError("kernel backend '" + std::string(name(backend)) + "' unavailable");
    return *compiled(backend);
}

const Table& active() {
    const Table* t = g_active.load(std::memory_order_acquire);
    if (!t) {
        const Table* chosen = initial_table();
        g_active.compare_exchange_strong(t, chosen, std::memory_order_acq_rel);
        t = g_active.load(std::memory_order_acquire);
    }
    return *t;
}

Backend active_backend() { return active().backend; }

void select(Backend backend) { g_active.store(&table(backend), std::memory_order_release); }

std::string_view name(Backend backend) {
    switch (backend) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
    }
    return "unknown";
}

std::optional<Backend> parse_backend(std::string_view text) {
    if (text == "scalar") return Backend::scalar;
    if (text == "avx2") return Backend::avx2;
    if (text == "neon") return Backend::neon;
    return std::nullopt;
}

} // namespace minegan::kernels
