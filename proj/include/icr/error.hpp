#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace icr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedSceneString : public Error {
public:
    MalformedSceneString(std::size_t offset, std::string field, const std::string& what)
        : Error("malformed scene string at byte " + std::to_string(offset) + " (field '" + field +
                "'): " + what),
          offset_(offset), field_(std::move(field)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::size_t offset_;
    std::string field_;
};

class EmptySourceScene : public Error {
public:
    EmptySourceScene() : Error("scene similarity requires a nonempty source scene") {}
};

/// Dialogue file does not match the configured schema.
class SchemaError : public Error {
public:
    SchemaError(std::string dialogue_id, std::string path, const std::string& what)
        : Error("schema error in dialogue '" + dialogue_id + "' at " + path + ": " + what),
          dialogue_id_(std::move(dialogue_id)), path_(std::move(path)) {}

    const std::string& dialogue_id() const noexcept { return dialogue_id_; }
    const std::string& path() const noexcept { return path_; }

private:
    std::string dialogue_id_;
    std::string path_;
};

/// A scene string inside a dialogue failed to parse; carries the dialogue/round locus.
class SceneParseError : public Error {
public:
    SceneParseError(std::string dialogue_id, int round, const MalformedSceneString& cause)
        : Error("dialogue '" + dialogue_id + "' round " + std::to_string(round) + ": " + cause.what()),
          dialogue_id_(std::move(dialogue_id)), round_(round), offset_(cause.offset()),
          field_(cause.field()) {}

    const std::string& dialogue_id() const noexcept { return dialogue_id_; }
    int round() const noexcept { return round_; }
    std::size_t offset() const noexcept { return offset_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string dialogue_id_;
    int round_;
    std::size_t offset_;
    std::string field_;
};

class DegenerateMarginals : public Error {
public:
    DegenerateMarginals()
        : Error("Cohen's kappa undefined: chance agreement is 1 (both annotators constant and identical)") {}
};

class InventoryMismatch : public Error {
public:
    using Error::Error;
};

class UnlabeledType : public Error {
public:
    explicit UnlabeledType(std::vector<int> missing)
        : Error(make_message(missing)), missing_(std::move(missing)) {}

    const std::vector<int>& missing() const noexcept { return missing_; }

private:
    static std::string make_message(const std::vector<int>& ids) {
        std::string msg = std::to_string(ids.size()) + " utterance type(s) without a final label:";
        for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + std::to_string(ids[i]);
        if (ids.size() > 20) msg += " ...";
        return msg;
    }
    std::vector<int> missing_;
};

class CorruptLabelFile : public Error {
public:
    using Error::Error;
};

class EmptySample : public Error {
public:
    EmptySample() : Error("permutation test requires two nonempty samples") {}
};

class BadMagic : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

class TruncatedFile : public Error {
public:
    using Error::Error;
};

class DimMismatch : public Error {
public:
    using Error::Error;
};

class MissingEmbedding : public Error {
public:
    explicit MissingEmbedding(std::vector<std::string> keys)
        : Error(make_message(keys)), keys_(std::move(keys)) {}

    const std::vector<std::string>& keys() const noexcept { return keys_; }

private:
    static std::string make_message(const std::vector<std::string>& keys) {
        std::string msg = std::to_string(keys.size()) + " embedding key(s) missing:";
        for (std::size_t i = 0; i < keys.size() && i < 10; ++i) msg += " " + keys[i];
        if (keys.size() > 10) msg += " ...";
        return msg;
    }
    std::vector<std::string> keys_;
};

class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(int epoch, int batch)
        : Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}

    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

class SingleClassTraining : public Error {
public:
    SingleClassTraining() : Error("logistic regression needs both labels in the training set") {}
};

class NoPositives : public Error {
public:
    NoPositives() : Error("average precision is undefined without positive labels") {}
};

}  // namespace icr
