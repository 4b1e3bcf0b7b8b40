#include <cstring>
#include <limits>

#include "support.hpp"

using namespace erp;
using testing_support::TempDir;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void poke_float(std::vector<char>& bytes, std::size_t offset, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) bytes[offset + i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
}

EpochSet tiny_set() {
  EpochSet set(1, 2, 4, 100.0);
  set.labels = {Label::target};
  for (std::size_t i = 0; i < set.data.size(); ++i) set.data[i] = 0.25 * static_cast<double>(i) - 1.0;
  return set;
}

}  // namespace

TEST(Epochs, OneEpochTwoChannelFourSamplesIs57Bytes) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  EXPECT_EQ(std::filesystem::file_size(dir / "a.erpe"), 24u + 1u + 32u);
  EXPECT_EQ(epoch_file_size(1, 2, 4), 57u);
}

TEST(Epochs, HeaderLayoutIsLittleEndian) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  const auto b = read_bytes(dir / "a.erpe");
  EXPECT_EQ(std::string(b.data(), 4), "ERPE");
  const unsigned char expected[] = {1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0};
  EXPECT_EQ(std::memcmp(b.data() + 4, expected, sizeof expected), 0);
  const unsigned char fs100[] = {0x00, 0x00, 0xC8, 0x42};
  EXPECT_EQ(std::memcmp(b.data() + 20, fs100, 4), 0);
  EXPECT_EQ(b[24], 1);
}

TEST(Epochs, RoundTripIsIdentity) {
  TempDir dir;
  const EpochSet set = testing_support::random_epochs(5, 7, 3, 11, 9);
  EpochSet rounded = set;
  for (double& v : rounded.data) v = static_cast<float>(v);
  save_epochs(rounded, dir / "r.erpe");
  EXPECT_EQ(load_epochs(dir / "r.erpe"), rounded);
}

TEST(Epochs, SavingIsByteDeterministic) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  save_epochs(tiny_set(), dir / "b.erpe");
  EXPECT_EQ(read_bytes(dir / "a.erpe"), read_bytes(dir / "b.erpe"));
}

TEST(Epochs, EmptySetRefused) {
  TempDir dir;
  EpochSet empty;
  EXPECT_ERP_ERROR(save_epochs(empty, dir / "e.erpe"), ErrorCode::invariant);
  EXPECT_FALSE(std::filesystem::exists(dir / "e.erpe"));
}

TEST(Epochs, BadMagicRejected) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  auto b = read_bytes(dir / "a.erpe");
  std::memcpy(b.data(), "XXXX", 4);
  write_bytes(dir / "a.erpe", b);
  EXPECT_ERP_ERROR(load_epochs(dir / "a.erpe"), ErrorCode::bad_magic);
}

TEST(Epochs, VersionMismatchRejected) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  auto b = read_bytes(dir / "a.erpe");
  b[4] = 2;
  write_bytes(dir / "a.erpe", b);
  EXPECT_ERP_ERROR(load_epochs(dir / "a.erpe"), ErrorCode::bad_version);
}

TEST(Epochs, TruncatedByOneByteRejected) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  auto b = read_bytes(dir / "a.erpe");
  b.pop_back();
  write_bytes(dir / "a.erpe", b);
  EXPECT_ERP_ERROR(load_epochs(dir / "a.erpe"), ErrorCode::truncated);
}

TEST(Epochs, TrailingByteRejected) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  auto b = read_bytes(dir / "a.erpe");
  b.push_back(0);
  write_bytes(dir / "a.erpe", b);
  EXPECT_ERP_ERROR(load_epochs(dir / "a.erpe"), ErrorCode::truncated);
}

TEST(Epochs, NonFiniteSampleRejectedOnLoad) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  auto b = read_bytes(dir / "a.erpe");
  poke_float(b, 25 + 4 * 3, std::numeric_limits<float>::infinity());
  write_bytes(dir / "a.erpe", b);
  EXPECT_ERP_ERROR(load_epochs(dir / "a.erpe"), ErrorCode::non_finite);
}

TEST(Epochs, LabelByteOutsideDomainRejected) {
  TempDir dir;
  save_epochs(tiny_set(), dir / "a.erpe");
  auto b = read_bytes(dir / "a.erpe");
  b[24] = 2;
  write_bytes(dir / "a.erpe", b);
  EXPECT_ERP_ERROR(load_epochs(dir / "a.erpe"), ErrorCode::label_domain);
}

TEST(Epochs, MissingFileIsIoError) {
  EXPECT_ERP_ERROR(load_epochs("/nonexistent/x.erpe"), ErrorCode::io);
}

TEST(Continuous, HeaderEcho) {
  TempDir dir;
  ContinuousRecording rec(3, 1000, 500.0);
  for (std::size_t i = 0; i < rec.data.size(); ++i) rec.data[i] = std::sin(0.01 * static_cast<double>(i));
  save_continuous(rec, dir / "c.erpc");
  EXPECT_EQ(std::filesystem::file_size(dir / "c.erpc"), kContinuousHeaderBytes + 4u * 3000u);
  const ContinuousRecording back = load_continuous(dir / "c.erpc");
  EXPECT_EQ(back.n_channels, 3u);
  EXPECT_EQ(back.n_samples, 1000u);
  EXPECT_EQ(back.fs_hz, 500.0);
}

TEST(Continuous, RoundTripIsBitExact) {
  TempDir dir;
  testing_support::Gen gen(3);
  ContinuousRecording rec(4, 257, 500.0);
  for (double& v : rec.data) v = static_cast<float>(gen.normal() * 40.0);
  save_continuous(rec, dir / "c.erpc");
  const ContinuousRecording back = load_continuous(dir / "c.erpc");
  ASSERT_EQ(back.data.size(), rec.data.size());
  for (std::size_t i = 0; i < rec.data.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data[i]), std::bit_cast<std::uint64_t>(rec.data[i]));
}

TEST(Continuous, NaNSampleRejected) {
  TempDir dir;
  save_continuous(ContinuousRecording(3, 1000, 500.0), dir / "c.erpc");
  auto b = read_bytes(dir / "c.erpc");
  poke_float(b, kContinuousHeaderBytes + 4 * 17, std::numeric_limits<float>::quiet_NaN());
  write_bytes(dir / "c.erpc", b);
  EXPECT_ERP_ERROR(load_continuous(dir / "c.erpc"), ErrorCode::non_finite);
}

TEST(Continuous, NaNRefusedBeforeWrite) {
  TempDir dir;
  ContinuousRecording rec(1, 4, 500.0);
  rec.data[2] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_ERP_ERROR(save_continuous(rec, dir / "c.erpc"), ErrorCode::non_finite);
}

TEST(Continuous, BadMagicAndTruncation) {
  TempDir dir;
  save_continuous(ContinuousRecording(2, 10, 500.0), dir / "c.erpc");
  auto b = read_bytes(dir / "c.erpc");
  auto short_file = b;
  short_file.pop_back();
  write_bytes(dir / "t.erpc", short_file);
  EXPECT_ERP_ERROR(load_continuous(dir / "t.erpc"), ErrorCode::truncated);
  std::memcpy(b.data(), "ERPE", 4);
  write_bytes(dir / "m.erpc", b);
  EXPECT_ERP_ERROR(load_continuous(dir / "m.erpc"), ErrorCode::bad_magic);
}

TEST(CsvImport, ReadsNamedChannels) {
  std::istringstream in("Cz, Pz\n1.5,2\n-3,4e1\n");
  const ContinuousRecording rec = import_continuous_csv(in, 250.0);
  EXPECT_EQ(rec.n_channels, 2u);
  EXPECT_EQ(rec.n_samples, 2u);
  EXPECT_EQ(rec.channel_names, (std::vector<std::string>{"Cz", "Pz"}));
  EXPECT_EQ(rec.at(0, 1), -3.0);
  EXPECT_EQ(rec.at(1, 1), 40.0);
}

TEST(CsvImport, RaggedRowRejected) {
  std::istringstream in("a,b\n1,2\n3\n");
  EXPECT_ERP_ERROR(import_continuous_csv(in, 250.0), ErrorCode::malformed);
}

TEST(CsvImport, NonFiniteRejected) {
  std::istringstream in("a\nnan\n");
  EXPECT_ERP_ERROR(import_continuous_csv(in, 250.0), ErrorCode::non_finite);
}

TEST(Events, TwoRowsParse) {
  std::istringstream in("sample_index,label\n100,1\n250,0\n");
  const EventList ev = parse_events(in);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0], (Event{100, Label::target}));
  EXPECT_EQ(ev[1], (Event{250, Label::nontarget}));
}

TEST(Events, DescendingIndicesRejected) {
  std::istringstream in("sample_index,label\n250,0\n100,1\n");
  EXPECT_ERP_ERROR(parse_events(in), ErrorCode::not_monotone);
}

TEST(Events, DuplicateIndexRejected) {
  std::istringstream in("sample_index,label\n100,0\n100,1\n");
  EXPECT_ERP_ERROR(parse_events(in), ErrorCode::not_monotone);
}

TEST(Events, LabelTwoRejected) {
  std::istringstream in("sample_index,label\n100,2\n");
  EXPECT_ERP_ERROR(parse_events(in), ErrorCode::label_domain);
}

TEST(Events, MalformedRowsRejected) {
  for (const char* body : {"100\n", "100,1,5\n", "x,1\n", "-4,1\n", "100,yes\n"}) {
    std::istringstream in(std::string("sample_index,label\n") + body);
    EXPECT_ERP_ERROR(parse_events(in), ErrorCode::malformed);
  }
  std::istringstream wrong_header("index,label\n1,1\n");
  EXPECT_ERP_ERROR(parse_events(wrong_header), ErrorCode::malformed);
}

TEST(Events, CrlfAndBlankLinesTolerated) {
  std::istringstream in("sample_index,label\r\n5,1\r\n\r\n9,0\r\n");
  EXPECT_EQ(parse_events(in).size(), 2u);
}

TEST(Events, FileRoundTrip) {
  TempDir dir;
  const EventList ev = {{0, Label::nontarget}, {17, Label::target}, {4000000000ULL, Label::nontarget}};
  save_events(ev, dir / "e.csv");
  EXPECT_EQ(testing_support::read_text(dir / "e.csv"), "sample_index,label\n0,0\n17,1\n4000000000,0\n");
  EXPECT_EQ(load_events(dir / "e.csv"), ev);
}

TEST(Events, IndexBeyondRecordingRejected) {
  EXPECT_ERP_ERROR(validate_events({{10, Label::target}}, 10), ErrorCode::out_of_range);
  EXPECT_NO_THROW(validate_events({{9, Label::target}}, 10));
}

TEST(Model, ParameterCountMatchesPayload) {
  const Architecture arch = Architecture::standard(32, 80);
  TempDir dir;
  save_model(init_network(arch, 1), dir / "m.erpm");
  EXPECT_EQ(std::filesystem::file_size(dir / "m.erpm"), kModelHeaderBytes + 8 * arch.parameter_count());
  // 32x80 input: 8x32+8, 16x8x11+16, 16x16x11+16, fc 16x(((80-10)/2-10)/2 = 12)+1
  EXPECT_EQ(arch.parameter_count(), 8u * 32 + 8 + 16 * 8 * 11 + 16 + 16 * 16 * 11 + 16 + 16 * 12 + 1);
}

TEST(Model, RoundTripIsBitExact) {
  TempDir dir;
  Architecture arch = Architecture::compact(3, 20);
  arch.activation = Activation::identity;
  const Network net = init_network(arch, 77);
  save_model(net, dir / "m.erpm");
  const Network back = load_model(dir / "m.erpm");
  EXPECT_EQ(back.arch, net.arch);
  ASSERT_EQ(back.values.size(), net.values.size());
  for (std::size_t i = 0; i < net.values.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.values[i]), std::bit_cast<std::uint64_t>(net.values[i]));
}

TEST(Model, PredictionsUnchangedAfterRoundTrip) {
  TempDir dir;
  const EpochSet batch = testing_support::random_epochs(4, 4, 6, 40, 5);
  const Network net = init_network(6, 40, 13);
  save_model(net, dir / "m.erpm");
  const Network back = load_model(dir / "m.erpm");
  for (std::size_t e = 0; e < batch.n_epochs; ++e)
    EXPECT_EQ(predict(back, epoch_matrix(batch, e)), predict(net, epoch_matrix(batch, e)));
}

TEST(Model, SevenOfEightSpatialKernelsRejected) {
  TempDir dir;
  const Network net = init_network(4, 40, 2);
  save_model(net, dir / "m.erpm");
  auto b = read_bytes(dir / "m.erpm");
  // Drop one spatial kernel's weights (n_channels doubles) from the payload.
  b.erase(b.begin() + static_cast<std::ptrdiff_t>(kModelHeaderBytes),
          b.begin() + static_cast<std::ptrdiff_t>(kModelHeaderBytes + 8 * 4));
  write_bytes(dir / "m.erpm", b);
  EXPECT_ERP_ERROR(load_model(dir / "m.erpm"), ErrorCode::truncated);
}

TEST(Model, InconsistentFcWidthRejected) {
  TempDir dir;
  save_model(init_network(4, 40, 2), dir / "m.erpm");
  auto b = read_bytes(dir / "m.erpm");
  b[8 + 4 * 9] += 1;
  write_bytes(dir / "m.erpm", b);
  EXPECT_ERP_ERROR(load_model(dir / "m.erpm"), ErrorCode::dimension);
}

TEST(Model, ArchitectureTooSmallForInputRejected) {
  TempDir dir;
  save_model(init_network(4, 40, 2), dir / "m.erpm");
  auto b = read_bytes(dir / "m.erpm");
  b[8 + 4] = 12;  // n_samples 40 -> 12
  write_bytes(dir / "m.erpm", b);
  EXPECT_ERP_ERROR(load_model(dir / "m.erpm"), ErrorCode::dimension);
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  const DatasetManifest m{"S7", "walking-1.6", Montage::ear, "s7/train.erpe", "s7/test.erpe"};
  save_manifest(m, dir / "manifest.txt");
  EXPECT_EQ(load_manifest(dir / "manifest.txt"), m);
}

TEST(Manifest, MontageChannelCountsValidated) {
  const DatasetManifest scalp{"S1", "standing", Montage::scalp, "a", "b"};
  const DatasetManifest ear{"S1", "standing", Montage::ear, "a", "b"};
  EXPECT_NO_THROW(scalp.validate_against(EpochSet(1, 32, 80, 100.0)));
  EXPECT_NO_THROW(ear.validate_against(EpochSet(1, 18, 80, 100.0)));
  EXPECT_ERP_ERROR(scalp.validate_against(EpochSet(1, 18, 80, 100.0)), ErrorCode::dimension);
  EXPECT_ERP_ERROR(ear.validate_against(EpochSet(1, 32, 80, 100.0)), ErrorCode::dimension);
}

TEST(Manifest, MissingKeyRejected) {
  TempDir dir;
  testing_support::write_text(dir / "m.txt", "subject_id=S1\nmontage=scalp\n");
  EXPECT_ERP_ERROR(load_manifest(dir / "m.txt"), ErrorCode::malformed);
}

// Property: random epoch sets survive save/load for arbitrary shapes.
TEST(EpochsProperty, RandomShapesRoundTrip) {
  TempDir dir;
  testing_support::Gen gen(2024);
  for (int trial = 0; trial < 40; ++trial) {
    EpochSet set(gen.index(1, 9), gen.index(1, 6), gen.index(1, 30), gen.uniform(50.0, 1000.0));
    set.fs_hz = static_cast<float>(set.fs_hz);
    for (auto& l : set.labels) l = gen.coin() ? Label::target : Label::nontarget;
    for (double& v : set.data) v = static_cast<float>(gen.normal() * 100.0);
    save_epochs(set, dir / "p.erpe");
    EXPECT_EQ(std::filesystem::file_size(dir / "p.erpe"), epoch_file_size(set.n_epochs, set.n_channels, set.n_samples));
    EXPECT_EQ(load_epochs(dir / "p.erpe"), set);
  }
}
