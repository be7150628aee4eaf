#pragma once

#include "rectedit/image.hpp"
#include "rectedit/instruction_forge.hpp"
#include "rectedit/vlm_client.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rectedit {

// A toy corpus of colored shapes on a 2x2 grid of cells. Every edit touches one
// shape and is labeled by construction, so no VLM is needed to get ground truth.

enum class ShapeKind { square, circle, cross };
enum class ShapeColor { red, green, blue, yellow };
enum class EditKind { recolor, add, remove, move };

inline constexpr int kSynthCells = 4;
inline constexpr std::array<const char *, kSynthCells> kCellNames = {"top left", "top right", "bottom left",
                                                                      "bottom right"};

std::string to_string(ShapeKind kind);
std::string to_string(ShapeColor color);
std::string to_string(EditKind kind);
std::string plural(ShapeKind kind);

struct SynthShape {
    ShapeKind kind = ShapeKind::square;
    ShapeColor color = ShapeColor::red;
    int cell = 0;
    friend bool operator==(const SynthShape &, const SynthShape &) = default;
};

struct SynthScene {
    std::vector<SynthShape> shapes;
    const SynthShape *at(int cell) const;
};

struct SynthConfig {
    int size = 16;
    int max_shapes = 3;
    /// Fraction of pairs whose raw instruction is wrong or vague.
    double raw_noise = 0.0;
    int k = 3;
};

struct SynthEdit {
    std::string id;
    EditKind kind = EditKind::recolor;
    SynthScene before;
    SynthScene after;
    Image original;
    Image edited;
    /// 1 inside the cells touched by the edit.
    std::vector<std::uint8_t> mask;
    std::string instruction;
    std::string raw_instruction;
    NegativeSet negatives;
    std::string layout_diff;
    std::string local_attr_diff;
    std::string style_detail_diff;
};

Image render_scene(const SynthScene &scene, int size);
/// Pixels covered by a shape of this kind in the given cell.
std::vector<std::uint8_t> shape_footprint(ShapeKind kind, int cell, int size);
std::vector<std::uint8_t> cell_mask(int cell, int size);

std::vector<SynthEdit> synth_world(int n, std::uint64_t seed, const SynthConfig &config = {});

/// Answers VLM requests from synth_world ground truth, keyed by the pair's image bytes.
/// Negatives responses lead with one invalid candidate so callers exercise validation.
class SynthOracleVlm : public VlmClient {
public:
    explicit SynthOracleVlm(const std::vector<SynthEdit> &edits);

    void add(const SynthEdit &edit);
    VlmResponse complete(const VlmRequest &request) override;
    std::uint64_t backend_calls() const override { return calls_.load(); }

private:
    struct Truth {
        VlmSections sections;
        std::vector<NegativeCandidate> candidates;
    };
    static std::string key(const std::vector<std::uint8_t> &original, const std::vector<std::uint8_t> &edited);

    std::map<std::string, Truth> truths_;
    std::atomic<std::uint64_t> calls_{0};
};

}  // namespace rectedit
