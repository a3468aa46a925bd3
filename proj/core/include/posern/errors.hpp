#pragma once

#include <stdexcept>
#include <string>

namespace posern {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Point lies on (or numerically too close to) a camera's principal plane.
struct DegenerateProjection : Error {
    using Error::Error;
};

/// Pelvis joint absent/invisible; frame cannot enter the refinement stages.
struct MissingPelvis : Error {
    using Error::Error;
};

/// Spine segment missing or shorter than the minimum usable length.
struct DegenerateSpine : Error {
    using Error::Error;
};

/// Triangulation design matrix is rank deficient (collinear rays, too few views).
struct DegenerateGeometry : Error {
    using Error::Error;
};

/// Iteration produced non-finite values.
struct NonFinite : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct EmptyDataset : Error {
    using Error::Error;
};

/// No (frame, joint) pair had both an estimate and ground truth to compare.
struct NoComparablePairs : Error {
    using Error::Error;
};

/// Checkpoint sidecar does not match the dataset skeleton.
struct SkeletonMismatch : Error {
    using Error::Error;
};

/// Bad or unresolvable configuration (unknown key, invariant violation, missing path).
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed input file (dataset, checkpoint, camera or skeleton file).
struct FormatError : Error {
    using Error::Error;
};

} // namespace posern
