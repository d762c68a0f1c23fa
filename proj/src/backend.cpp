#include "selfscore/backend.hpp"

#include "selfscore/errors.hpp"

namespace selfscore {

std::unique_ptr<Backend> apply_delta(const Backend& base, const NamedDelta& delta) {
    return base.with_delta(delta);
}

NamedDelta add_deltas(const NamedDelta& a, const NamedDelta& b) {
    NamedDelta out = a;
    if (out.metadata.base_id.empty()) out.metadata.base_id = b.metadata.base_id;
    for (const auto& [name, tensor] : b.entries) {
        auto it = out.entries.find(name);
        if (it == out.entries.end()) {
            out.entries.emplace(name, tensor);
            continue;
        }
        if (it->second.rows() != tensor.rows() || it->second.cols() != tensor.cols())
            throw ShapeMismatch("shape mismatch for '" + name + "' while summing deltas");
        it->second += tensor;
    }
    return out;
}

}  // namespace selfscore
