#include <algorithm>
#include <numeric>

#include "clickchoice/errors.hpp"
#include "clickchoice/evaluation.hpp"

namespace clickchoice {

std::vector<ClassProfile> report_class_profiles(const LatentClassModel& model, const CountTensor* tensor,
                                                const std::vector<int>& frequency_slices,
                                                const std::vector<int>& recency_slices) {
    const GridSpec& g = model.grid();
    for (int j : frequency_slices) {
        if (j < 1 || j > g.frequency_levels) throw InputError("frequency slice " + std::to_string(j) + " outside grid " + g.to_string());
    }
    for (int i : recency_slices) {
        if (i < 1 || i > g.recency_levels) throw InputError("recency slice " + std::to_string(i) + " outside grid " + g.to_string());
    }

    std::vector<std::int64_t> exposure(model.categories.size(), 0);
    if (tensor != nullptr) {
        for (std::size_t k = 0; k < model.categories.size(); ++k) {
            const auto idx = tensor->category_index(model.categories[k]);
            if (!idx) continue;
            for (std::size_t c = 0; c < tensor->grid().cells(); ++c) exposure[k] += tensor->n_at(*idx, c);
        }
    }

    std::vector<ClassProfile> out(model.classes());
    for (std::size_t s = 0; s < model.classes(); ++s) {
        out[s].index = s + 1;
        out[s].pi = model.pi[s];
        for (int j : frequency_slices) {
            auto& v = out[s].at_frequency[j];
            for (int i = 1; i <= g.recency_levels; ++i) v.push_back(model.tables[s].at(i, j));
        }
        for (int i : recency_slices) {
            auto& v = out[s].at_recency[i];
            for (int j = 1; j <= g.frequency_levels; ++j) v.push_back(model.tables[s].at(i, j));
        }
    }

    // Hard assignment by highest membership, lowest class index on ties.
    std::vector<std::vector<std::size_t>> members(model.classes());
    for (std::size_t k = 0; k < model.memberships.rows; ++k) {
        std::size_t best = 0;
        for (std::size_t s = 1; s < model.classes(); ++s) {
            if (model.memberships(k, s) > model.memberships(k, best)) best = s;
        }
        members[best].push_back(k);
    }
    for (std::size_t s = 0; s < model.classes(); ++s) {
        auto& ks = members[s];
        std::stable_sort(ks.begin(), ks.end(), [&](std::size_t a, std::size_t b) {
            if (exposure[a] != exposure[b]) return exposure[a] > exposure[b];
            return model.categories[a] < model.categories[b];
        });
        for (std::size_t k : ks) {
            out[s].categories.push_back(model.categories[k]);
            if (tensor != nullptr) out[s].category_pairs.push_back(exposure[k]);
        }
    }
    return out;
}

}  // namespace clickchoice
