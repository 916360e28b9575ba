#pragma once

#include <stdexcept>
#include <string>

namespace spav {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyMesh : Error { using Error::Error; };
struct EmptyCloud : Error { using Error::Error; };
struct KTooLarge : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct MissingNormals : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct InvalidWeights : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct SizeMismatch : Error { using Error::Error; };
struct MissingRegistration : Error { using Error::Error; };
struct UnlabeledVertex : Error { using Error::Error; };
struct MissingColors : Error { using Error::Error; };
struct EmptyTrainingSet : Error { using Error::Error; };
struct EmptySurface : Error { using Error::Error; };
struct OpenMesh : Error { using Error::Error; };
struct EmptyPart : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace spav
