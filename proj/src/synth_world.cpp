#include "rectedit/synth_world.hpp"

#include "rectedit/error.hpp"
#include "rectedit/hashing.hpp"

#include <algorithm>
#include <random>

namespace rectedit {

namespace {

constexpr std::array<ShapeKind, 3> kKinds = {ShapeKind::square, ShapeKind::circle, ShapeKind::cross};
constexpr std::array<ShapeColor, 4> kColors = {ShapeColor::red, ShapeColor::green, ShapeColor::blue,
                                               ShapeColor::yellow};
constexpr std::uint8_t kBackground = 24;

std::array<std::uint8_t, 3> rgb_of(ShapeColor color) {
    switch (color) {
    case ShapeColor::red: return {220, 40, 40};
    case ShapeColor::green: return {40, 200, 60};
    case ShapeColor::blue: return {50, 80, 230};
    case ShapeColor::yellow: return {230, 210, 40};
    }
    return {0, 0, 0};
}

bool covers(ShapeKind kind, double u, double v) {
    // u, v in [0, 1) across the cell interior.
    const double du = u - 0.5, dv = v - 0.5;
    switch (kind) {
    case ShapeKind::square: return true;
    case ShapeKind::circle: return du * du + dv * dv <= 0.25;
    case ShapeKind::cross: return std::abs(du) < 0.17 || std::abs(dv) < 0.17;
    }
    return false;
}

template <typename Range>
auto pick(const Range &range, std::mt19937_64 &rng) {
    std::uniform_int_distribution<std::size_t> d(0, range.size() - 1);
    return range[d(rng)];
}

int uniform_int(std::mt19937_64 &rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string loc(int cell) { return kCellNames[static_cast<std::size_t>(cell)]; }

std::string describe(const SynthShape &s) { return to_string(s.color) + " " + to_string(s.kind); }

std::string replace_once(std::string text, const std::string &from, const std::string &to) {
    const auto pos = text.find(from);
    if (pos != std::string::npos) {
        text.replace(pos, from.size(), to);
    }
    return text;
}

// Replaces the last occurrence; used for the destination of a move.
std::string replace_last(std::string text, const std::string &from, const std::string &to) {
    const auto pos = text.rfind(from);
    if (pos != std::string::npos) {
        text.replace(pos, from.size(), to);
    }
    return text;
}

struct Candidate {
    std::string text;
    SubstitutedAttribute attribute;
};

std::vector<Candidate> location_swaps(const SynthEdit &e, const SynthShape &target, int dest) {
    std::vector<Candidate> out;
    for (int c = 0; c < kSynthCells; ++c) {
        if (e.kind == EditKind::move) {
            if (c == dest || c == target.cell) continue;
            out.push_back({replace_last(e.instruction, "the " + loc(dest), "the " + loc(c)),
                           SubstitutedAttribute::location});
        } else {
            if (c == target.cell) continue;
            out.push_back({replace_last(e.instruction, "the " + loc(target.cell), "the " + loc(c)),
                           SubstitutedAttribute::location});
        }
    }
    return out;
}

std::vector<Candidate> object_swaps(const SynthEdit &e, const SynthShape &target) {
    std::vector<Candidate> out;
    for (auto k : kKinds) {
        if (k == target.kind) continue;
        out.push_back({replace_once(e.instruction, " " + to_string(target.kind) + " ", " " + to_string(k) + " "),
                       SubstitutedAttribute::object});
    }
    return out;
}

NegativeSet make_negatives(const SynthEdit &e, const SynthShape &target, int dest, int k, std::mt19937_64 &rng) {
    auto locations = location_swaps(e, target, dest);
    auto objects = object_swaps(e, target);
    std::shuffle(locations.begin(), locations.end(), rng);
    std::shuffle(objects.begin(), objects.end(), rng);

    std::vector<Candidate> ordered;
    if (e.kind == EditKind::add) {
        ordered.push_back({replace_once(replace_once(e.instruction, "add a ", "add two "),
                                        " " + to_string(target.kind) + " ", " " + plural(target.kind) + " "),
                           SubstitutedAttribute::quantity});
    }
    // Alternate location and object substitutions so every set mixes attributes.
    for (std::size_t i = 0; i < std::max(locations.size(), objects.size()); ++i) {
        if (i < locations.size()) ordered.push_back(locations[i]);
        if (i < objects.size()) ordered.push_back(objects[i]);
    }

    NegativeSet set;
    set.positive = e.instruction;
    for (const auto &c : ordered) {
        if (static_cast<int>(set.negatives.size()) >= k) break;
        if (std::find(set.negatives.begin(), set.negatives.end(), c.text) != set.negatives.end()) continue;
        set.negatives.push_back(c.text);
        set.attributes.push_back(c.attribute);
    }
    return set;
}

std::string corrupt(const SynthEdit &e, const SynthShape &target, std::mt19937_64 &rng) {
    switch (uniform_int(rng, 0, 2)) {
    case 0: {
        auto other = target.color;
        while (other == target.color) other = pick(kColors, rng);
        return replace_once(e.instruction, to_string(target.color), to_string(other));
    }
    case 1: {
        const int other = (target.cell + uniform_int(rng, 1, kSynthCells - 1)) % kSynthCells;
        return replace_once(e.instruction, loc(target.cell), loc(other));
    }
    default:
        return "make a change to the picture";
    }
}

std::vector<std::uint8_t> union_mask(std::vector<std::uint8_t> a, const std::vector<std::uint8_t> &b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<std::uint8_t>(a[i] | b[i]);
    return a;
}

}  // namespace

std::string to_string(ShapeKind kind) {
    switch (kind) {
    case ShapeKind::square: return "square";
    case ShapeKind::circle: return "circle";
    case ShapeKind::cross: return "cross";
    }
    return "square";
}

std::string plural(ShapeKind kind) {
    return kind == ShapeKind::cross ? "crosses" : to_string(kind) + "s";
}

std::string to_string(ShapeColor color) {
    switch (color) {
    case ShapeColor::red: return "red";
    case ShapeColor::green: return "green";
    case ShapeColor::blue: return "blue";
    case ShapeColor::yellow: return "yellow";
    }
    return "red";
}

std::string to_string(EditKind kind) {
    switch (kind) {
    case EditKind::recolor: return "recolor";
    case EditKind::add: return "add";
    case EditKind::remove: return "remove";
    case EditKind::move: return "move";
    }
    return "recolor";
}

const SynthShape *SynthScene::at(int cell) const {
    for (const auto &s : shapes) {
        if (s.cell == cell) return &s;
    }
    return nullptr;
}

std::vector<std::uint8_t> shape_footprint(ShapeKind kind, int cell, int size) {
    require(size >= 4 && size % 2 == 0, ErrorCode::invalid_range, "synth canvas size must be even and >= 4");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
    const int half = size / 2;
    const int x0 = (cell % 2) * half, y0 = (cell / 2) * half;
    const int inset = std::max(1, half / 8);
    const int span = half - 2 * inset;
    for (int y = 0; y < span; ++y) {
        for (int x = 0; x < span; ++x) {
            if (covers(kind, (x + 0.5) / span, (y + 0.5) / span)) {
                mask[static_cast<std::size_t>(y0 + inset + y) * size + x0 + inset + x] = 1;
            }
        }
    }
    return mask;
}

std::vector<std::uint8_t> cell_mask(int cell, int size) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
    const int half = size / 2;
    const int x0 = (cell % 2) * half, y0 = (cell / 2) * half;
    for (int y = y0; y < y0 + half; ++y) {
        for (int x = x0; x < x0 + half; ++x) mask[static_cast<std::size_t>(y) * size + x] = 1;
    }
    return mask;
}

Image render_scene(const SynthScene &scene, int size) {
    Image image(size, size, kBackground);
    for (const auto &s : scene.shapes) {
        const auto fp = shape_footprint(s.kind, s.cell, size);
        const auto rgb = rgb_of(s.color);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                if (fp[static_cast<std::size_t>(y) * size + x]) std::copy(rgb.begin(), rgb.end(), image.pixel(x, y));
            }
        }
    }
    return image;
}

std::vector<SynthEdit> synth_world(int n, std::uint64_t seed, const SynthConfig &config) {
    require(n >= 1, ErrorCode::invalid_range, "synth_world needs n >= 1");
    require(config.max_shapes >= 1 && config.max_shapes < kSynthCells, ErrorCode::invalid_range,
            "max_shapes must be in [1, 3]");
    require(config.raw_noise >= 0.0 && config.raw_noise <= 1.0, ErrorCode::invalid_range, "raw_noise must be in [0, 1]");
    std::vector<SynthEdit> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng(derive_seed(seed, "synth.pair", static_cast<std::uint64_t>(i)));
        SynthEdit e;
        std::array<int, kSynthCells> cells = {0, 1, 2, 3};
        std::shuffle(cells.begin(), cells.end(), rng);
        const int count = uniform_int(rng, 1, config.max_shapes);
        for (int s = 0; s < count; ++s) {
            e.before.shapes.push_back({pick(kKinds, rng), pick(kColors, rng), cells[static_cast<std::size_t>(s)]});
        }
        const int empty_cell = cells[static_cast<std::size_t>(count)];
        e.kind = static_cast<EditKind>(uniform_int(rng, 0, 3));
        e.after = e.before;
        const std::size_t idx = static_cast<std::size_t>(uniform_int(rng, 0, count - 1));
        SynthShape target = e.before.shapes[idx];
        int dest = target.cell;
        switch (e.kind) {
        case EditKind::recolor: {
            auto color = target.color;
            while (color == target.color) color = pick(kColors, rng);
            e.after.shapes[idx].color = color;
            e.instruction = "change the " + describe(target) + " in the " + loc(target.cell) + " to " + to_string(color);
            e.local_attr_diff = "the " + describe(target) + " in the " + loc(target.cell) + " is now " + to_string(color);
            e.layout_diff = "none";
            e.mask = cell_mask(target.cell, config.size);
            break;
        }
        case EditKind::add: {
            target = {pick(kKinds, rng), pick(kColors, rng), empty_cell};
            e.after.shapes.push_back(target);
            e.instruction = "add a " + describe(target) + " in the " + loc(target.cell);
            e.layout_diff = "a " + describe(target) + " appears in the " + loc(target.cell);
            e.local_attr_diff = "none";
            e.mask = cell_mask(target.cell, config.size);
            break;
        }
        case EditKind::remove: {
            e.after.shapes.erase(e.after.shapes.begin() + static_cast<std::ptrdiff_t>(idx));
            e.instruction = "remove the " + describe(target) + " in the " + loc(target.cell);
            e.layout_diff = "the " + describe(target) + " in the " + loc(target.cell) + " is gone";
            e.local_attr_diff = "none";
            e.mask = cell_mask(target.cell, config.size);
            break;
        }
        case EditKind::move: {
            dest = empty_cell;
            e.after.shapes[idx].cell = dest;
            e.instruction =
                "move the " + describe(target) + " from the " + loc(target.cell) + " to the " + loc(dest);
            e.layout_diff = "the " + describe(target) + " moved from the " + loc(target.cell) + " to the " + loc(dest);
            e.local_attr_diff = "none";
            e.mask = union_mask(cell_mask(target.cell, config.size), cell_mask(dest, config.size));
            break;
        }
        }
        e.style_detail_diff = "none";
        e.original = render_scene(e.before, config.size);
        e.edited = render_scene(e.after, config.size);
        e.negatives = make_negatives(e, target, dest, config.k, rng);
        e.raw_instruction = std::bernoulli_distribution(config.raw_noise)(rng) ? corrupt(e, target, rng) : e.instruction;
        e.id = sha256_hex(std::to_string(seed) + ":" + std::to_string(i) + ":" + e.instruction).substr(0, 16);
        out.push_back(std::move(e));
    }
    return out;
}

SynthOracleVlm::SynthOracleVlm(const std::vector<SynthEdit> &edits) {
    for (const auto &e : edits) add(e);
}

std::string SynthOracleVlm::key(const std::vector<std::uint8_t> &original, const std::vector<std::uint8_t> &edited) {
    const auto a = decode_png(original);
    const auto b = decode_png(edited);
    return sha256_hex(a.rgb) + sha256_hex(b.rgb);
}

void SynthOracleVlm::add(const SynthEdit &edit) {
    Truth truth;
    truth.sections = VlmSections{edit.layout_diff, edit.local_attr_diff, edit.style_detail_diff, edit.instruction};
    truth.candidates.push_back({edit.instruction, "location"});
    for (std::size_t i = 0; i < edit.negatives.negatives.size(); ++i) {
        truth.candidates.push_back({edit.negatives.negatives[i], to_string(edit.negatives.attributes[i])});
    }
    truths_[key(encode_png(edit.original), encode_png(edit.edited))] = std::move(truth);
}

VlmResponse SynthOracleVlm::complete(const VlmRequest &request) {
    request.validate();
    calls_.fetch_add(1);
    require(request.images.size() == 2, ErrorCode::malformed_response, "synth oracle needs an image pair");
    const auto it = truths_.find(key(request.images[0], request.images[1]));
    if (it == truths_.end()) {
        fail(ErrorCode::malformed_response, "synth oracle does not know this pair");
    }
    VlmResponse response;
    response.usage = {static_cast<std::int64_t>(count_tokens(request.prompt)), 32};
    if (request.task == VlmTask::negatives) {
        response.candidates = it->second.candidates;
    } else {
        response.sections = it->second.sections;
    }
    return response;
}

}  // namespace rectedit
