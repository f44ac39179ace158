#pragma once

// Parameter and Multi-Adds accounting. One multiply-accumulate is counted
// as two operations (multiply + add); elementwise ops, bias additions,
// softmax and layer norm are excluded. Feature maps are evaluated at the
// LR extent (hr/scale) for every layer: both upsampler convs run before
// their pixel shuffle.

#include <cstdint>
#include <string>
#include <vector>

#include "scet/model.hpp"

namespace scet {

struct CostRow {
    std::string name;
    std::int64_t params = 0;
    std::int64_t multiadds = 0;
};

struct CostReport {
    std::vector<CostRow> rows;  // ordered as the registry
    std::int64_t total_params = 0;
    std::int64_t total_multiadds = 0;
    int hr_width = 0, hr_height = 0;
};

std::string render_text(const CostReport& report);
std::string render_csv(const CostReport& report);

namespace detail {

// "scpa.3.fuse.weight" -> "scpa.3"; "mdta.ln.gamma" -> "mdta"
inline std::string submodule_of(const std::string& param_name) {
    auto first = param_name.find('.');
    std::string head = param_name.substr(0, first);
    if (head != "scpa") return head;
    auto second = param_name.find('.', first + 1);
    return param_name.substr(0, second);
}

}  // namespace detail

template <typename T>
std::int64_t count_params(const SCETModel<T>& model) {
    return model.registry().total_params();
}

template <typename T>
CostReport report(const SCETModel<T>& model, int hr_width = 1280, int hr_height = 720) {
    const SCETConfig& cfg = model.config();
    if (hr_width % cfg.scale != 0 || hr_height % cfg.scale != 0)
        throw std::invalid_argument("audit: HR extent " + std::to_string(hr_width) + "x" + std::to_string(hr_height) +
                                    " not divisible by scale " + std::to_string(cfg.scale));
    const std::int64_t lr_pixels =
        static_cast<std::int64_t>(hr_width / cfg.scale) * (hr_height / cfg.scale);

    CostReport rep;
    rep.hr_width = hr_width;
    rep.hr_height = hr_height;
    for (const auto& [name, t] : model.registry()) {
        const std::string sub = detail::submodule_of(name);
        if (rep.rows.empty() || rep.rows.back().name != sub) rep.rows.push_back({sub, 0, 0});
        CostRow& row = rep.rows.back();
        row.params += static_cast<std::int64_t>(t.size());
        // a rank-4 entry is a conv weight: numel == MACs per output pixel
        if (t.rank() == 4) row.multiadds += 2 * static_cast<std::int64_t>(t.size()) * lr_pixels;
    }
    if (cfg.with_transformer) {
        // transposed attention: two (C/h)x(C/h) <-> HW matmul pairs per head
        const std::int64_t c = cfg.channels;
        const std::int64_t attn_macs = 2 * c * c * lr_pixels / cfg.mdta_heads;
        for (auto& row : rep.rows)
            if (row.name == "mdta") row.multiadds += 2 * attn_macs;
    }
    for (const auto& row : rep.rows) {
        rep.total_params += row.params;
        rep.total_multiadds += row.multiadds;
    }
    return rep;
}

template <typename T>
std::int64_t count_multiadds(const SCETModel<T>& model, int hr_width = 1280, int hr_height = 720) {
    return report(model, hr_width, hr_height).total_multiadds;
}

}  // namespace scet
