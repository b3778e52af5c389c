#pragma once

#include <stdexcept>

namespace mlran {

// Base for every error raised by the library. Callers that only need to
// report a failure can catch this; the subclasses carry the error kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MLRAN_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

// ingest
MLRAN_DEFINE_ERROR(MalformedDocument)
MLRAN_DEFINE_ERROR(DirectoryNotFound)
MLRAN_DEFINE_ERROR(DuplicateSampleId)
// features / persisted formats
MLRAN_DEFINE_ERROR(EmptyTrainingSet)
MLRAN_DEFINE_ERROR(FormatError)
// corpus
MLRAN_DEFINE_ERROR(SchemaMismatch)
MLRAN_DEFINE_ERROR(BadDate)
MLRAN_DEFINE_ERROR(MissingTimestamp)
// selection / models / evaluation
MLRAN_DEFINE_ERROR(LengthMismatch)
MLRAN_DEFINE_ERROR(TargetTooLarge)
MLRAN_DEFINE_ERROR(ColumnMismatch)
MLRAN_DEFINE_ERROR(EmptyMatrix)
MLRAN_DEFINE_ERROR(InvalidArgument)

#undef MLRAN_DEFINE_ERROR

}  // namespace mlran
