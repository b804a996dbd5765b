#pragma once

#include <stdexcept>
#include <string>

namespace gaitstream {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define GAITSTREAM_ERROR(Name)            \
    class Name : public Error {           \
    public:                               \
        using Error::Error;               \
    }

GAITSTREAM_ERROR(FormatError);
GAITSTREAM_ERROR(ValidationError);
GAITSTREAM_ERROR(DesignError);
GAITSTREAM_ERROR(LengthError);
GAITSTREAM_ERROR(InputError);
GAITSTREAM_ERROR(InterpolationError);
GAITSTREAM_ERROR(AlignmentError);
GAITSTREAM_ERROR(LabelError);
GAITSTREAM_ERROR(TrainError);
GAITSTREAM_ERROR(PartitionError);
GAITSTREAM_ERROR(AdaptError);
GAITSTREAM_ERROR(ProjectionError);
GAITSTREAM_ERROR(TrendError);
GAITSTREAM_ERROR(ProtocolError);
GAITSTREAM_ERROR(ConfigError);

#undef GAITSTREAM_ERROR

} // namespace gaitstream
