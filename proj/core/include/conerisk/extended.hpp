#pragma once

#include <string>

#include "conerisk/lp.hpp"

namespace conerisk {

enum class ValueFlag { Finite, NegInf, PosInf };

/// Extended real used for risk values and support functions. Arithmetic is
/// deliberately not overloaded: callers must branch on the flag and can
/// only extract the payload of finite values, so infinities cannot leak
/// into numeric expressions unnoticed.
struct ExtValue {
    double v = 0.0;
    ValueFlag flag = ValueFlag::Finite;

    static ExtValue finite(double x) { return {x, ValueFlag::Finite}; }
    static ExtValue neg_inf() { return {0.0, ValueFlag::NegInf}; }
    static ExtValue pos_inf() { return {0.0, ValueFlag::PosInf}; }

    bool finite_p() const { return flag == ValueFlag::Finite; }
    double value() const {
        if (flag != ValueFlag::Finite)
            throw Error("ExtValue: arithmetic access to a non-finite value");
        return v;
    }
};

inline std::string to_string(ValueFlag f) {
    switch (f) {
        case ValueFlag::Finite: return "finite";
        case ValueFlag::NegInf: return "-inf";
        case ValueFlag::PosInf: return "+inf";
    }
    return "?";
}

}  // namespace conerisk
