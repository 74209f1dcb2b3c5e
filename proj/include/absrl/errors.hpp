#pragma once

#include <stdexcept>
#include <string>

namespace absrl {

// Root of every error thrown by the library. Subclasses name the failure;
// the message carries the details.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ABSRL_DEFINE_ERROR(Name)          \
  class Name : public ::absrl::Error {    \
   public:                                \
    using ::absrl::Error::Error;          \
  }

// class_tree
ABSRL_DEFINE_ERROR(EmptyInput);
ABSRL_DEFINE_ERROR(ConflictingParent);
ABSRL_DEFINE_ERROR(InvalidTree);
ABSRL_DEFINE_ERROR(UnknownSymbol);
ABSRL_DEFINE_ERROR(CannotCollapseRoot);
ABSRL_DEFINE_ERROR(CannotCollapseLeafLayer);

// kg_ingest
ABSRL_DEFINE_ERROR(MalformedLine);
ABSRL_DEFINE_ERROR(FileUnreadable);
ABSRL_DEFINE_ERROR(HttpError);
ABSRL_DEFINE_ERROR(RateLimited);
ABSRL_DEFINE_ERROR(MalformedResponse);

// symbol_store
ABSRL_DEFINE_ERROR(EmptySet);

// toy_env
ABSRL_DEFINE_ERROR(InvalidSpec);
ABSRL_DEFINE_ERROR(InvalidAction);

// nn_core and trainers
ABSRL_DEFINE_ERROR(ShapeMismatch);
ABSRL_DEFINE_ERROR(NonFiniteInput);
ABSRL_DEFINE_ERROR(NonFiniteLoss);
ABSRL_DEFINE_ERROR(LevelMismatch);

// harness
ABSRL_DEFINE_ERROR(ConfigInvalid);
ABSRL_DEFINE_ERROR(SchemaMismatch);
ABSRL_DEFINE_ERROR(NonMonotoneClock);
ABSRL_DEFINE_ERROR(PartialFailure);

#undef ABSRL_DEFINE_ERROR

}  // namespace absrl
