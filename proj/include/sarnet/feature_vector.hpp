#pragma once

#include "sarnet/error.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace sarnet {

// Ordered map feature-name -> value. Order is the schema order and is
// preserved across rows of a run.
class FeatureVector {
public:
    FeatureVector() = default;

    void set(std::string name, double value) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) {
                values_[i] = value;
                return;
            }
        }
        names_.push_back(std::move(name));
        values_.push_back(value);
    }

    bool contains(std::string_view name) const {
        for (const auto& n : names_)
            if (n == name) return true;
        return false;
    }

    double at(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return values_[i];
        raise(Errc::SchemaMismatch, "unknown feature '" + std::string(name) + "'");
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<double>& values() const { return values_; }
    double value(std::size_t i) const { return values_[i]; }
    void set_value(std::size_t i, double v) { values_[i] = v; }

    bool same_schema(const FeatureVector& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::vector<double> values_;
};

} // namespace sarnet
