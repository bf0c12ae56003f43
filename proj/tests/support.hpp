#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "icr/scene.hpp"

namespace icr_test {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("icr_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline icr::Clipart random_clipart(std::mt19937_64& rng, int key) {
    icr::Clipart c;
    c.object_key = key;
    c.type_id = static_cast<int>(rng() % icr::kNumClipartTypes);
    if (icr::is_person(c.type_id))
        c.variant = icr::PersonVariant{static_cast<int>(rng() % 5), static_cast<int>(rng() % 7)};
    c.x = static_cast<double>(rng() % 501);
    c.y = static_cast<double>(rng() % 401);
    c.depth = static_cast<int>(rng() % 3);
    c.flip = rng() % 2;
    return c;
}

inline icr::Scene random_scene(std::mt19937_64& rng, int max_key = 20, int max_size = 12) {
    std::vector<int> keys(static_cast<std::size_t>(max_key));
    for (int i = 0; i < max_key; ++i) keys[static_cast<std::size_t>(i)] = i;
    std::shuffle(keys.begin(), keys.end(), rng);
    const int n = static_cast<int>(rng() % static_cast<unsigned>(max_size + 1));
    std::vector<icr::Clipart> cs;
    for (int i = 0; i < n; ++i) cs.push_back(random_clipart(rng, keys[static_cast<std::size_t>(i)]));
    return icr::Scene(std::move(cs));
}

/// Perturbs a scene: drops, adds, and edits attributes of random cliparts.
inline icr::Scene mutate_scene(std::mt19937_64& rng, const icr::Scene& s, int max_key = 20) {
    std::vector<icr::Clipart> out;
    std::vector<bool> used(static_cast<std::size_t>(max_key), false);
    for (auto c : s.cliparts()) {
        if (rng() % 6 == 0) continue;
        if (rng() % 3 == 0) { c.x = static_cast<double>(rng() % 501); c.y = static_cast<double>(rng() % 401); }
        if (rng() % 4 == 0) c.depth = static_cast<int>(rng() % 3);
        if (rng() % 4 == 0) c.flip = !c.flip;
        if (rng() % 10 == 0) {
            auto r = random_clipart(rng, c.object_key);
            c.type_id = r.type_id;
            c.variant = r.variant;
        }
        used[static_cast<std::size_t>(c.object_key)] = true;
        out.push_back(c);
    }
    for (int k = 0; k < max_key; ++k)
        if (!used[static_cast<std::size_t>(k)] && !s.find(k) && rng() % 8 == 0) out.push_back(random_clipart(rng, k));
    return icr::Scene(std::move(out));
}

}  // namespace icr_test
