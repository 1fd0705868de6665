#pragma once

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "flowbm/common.hpp"

namespace flowbm {

/// Layer widths (layer 0 observed) and, per hidden layer, whether that layer has
/// intra-layer connections. A single layer means a fully-observed machine with
/// all-to-all connectivity.
struct LayerSpec {
    std::vector<std::size_t> sizes;
    std::vector<bool> intra_layer;

    LayerSpec() = default;
    LayerSpec(std::vector<std::size_t> widths, std::vector<bool> intra)
        : sizes(std::move(widths)), intra_layer(std::move(intra)) {
        check();
    }

    static LayerSpec fully_observed(std::size_t n) { return LayerSpec({n}, {}); }
    static LayerSpec rbm(std::size_t visible, std::size_t hidden, bool intra = false) {
        return LayerSpec({visible, hidden}, {intra});
    }

    void check() const {
        require(!sizes.empty(), "layout: at least one layer is required");
        for (auto s : sizes) require(s >= 1, "layout: layer widths must be positive");
        require(intra_layer.size() == sizes.size() - 1,
                "layout: need one intra-layer flag per hidden layer (got " +
                    std::to_string(intra_layer.size()) + " for " +
                    std::to_string(sizes.size() - 1) + " hidden layers)");
    }

    [[nodiscard]] std::size_t layers() const { return sizes.size(); }
    [[nodiscard]] std::size_t hidden_layers() const { return sizes.size() - 1; }
    [[nodiscard]] bool fully_observed_bm() const { return sizes.size() == 1; }

    [[nodiscard]] std::size_t total() const {
        std::size_t n = 0;
        for (auto s : sizes) n += s;
        return n;
    }
    [[nodiscard]] std::size_t offset(std::size_t layer) const {
        std::size_t o = 0;
        for (std::size_t k = 0; k < layer; ++k) o += sizes[k];
        return o;
    }
    /// Whether layer k (k >= 1) has intra-layer edges. Layer 0 of a fully-observed
    /// machine counts as intra-connected.
    [[nodiscard]] bool has_intra(std::size_t layer) const {
        if (fully_observed_bm()) return layer == 0;
        return layer >= 1 && intra_layer[layer - 1];
    }
    [[nodiscard]] bool is_plain_rbm() const {
        return sizes.size() == 2 && !intra_layer[0];
    }

    [[nodiscard]] std::string to_string() const {
        std::ostringstream os;
        for (std::size_t k = 0; k < sizes.size(); ++k) os << (k ? "-" : "") << sizes[k];
        if (!intra_layer.empty()) {
            os << " intra=";
            for (std::size_t k = 0; k < intra_layer.size(); ++k)
                os << (k ? "," : "") << (intra_layer[k] ? 1 : 0);
        }
        return os.str();
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Parses "784-196-196-64" and an optional "1,0,1" intra list (empty = all off).
inline LayerSpec parse_layout(const std::string& widths, const std::string& intra = "") {
    std::vector<std::size_t> sizes;
    std::stringstream ws(widths);
    std::string tok;
    while (std::getline(ws, tok, '-')) {
        require(!tok.empty() && tok.find_first_not_of("0123456789") == std::string::npos,
                "layout: bad layer width '" + tok + "' in '" + widths + "'");
        sizes.push_back(std::stoul(tok));
    }
    require(!sizes.empty(), "layout: empty layout string");
    std::vector<bool> flags;
    if (intra.empty()) {
        flags.assign(sizes.size() - 1, false);
    } else {
        std::stringstream is(intra);
        while (std::getline(is, tok, ',')) {
            require(tok == "0" || tok == "1", "layout: intra flags must be 0 or 1, got '" + tok + "'");
            flags.push_back(tok == "1");
        }
    }
    return LayerSpec(std::move(sizes), std::move(flags));
}

}  // namespace flowbm
