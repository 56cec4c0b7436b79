#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"
#include "toposeg/error.hpp"
#include "toposeg/manifest.hpp"

namespace toposeg {
namespace {

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

TEST(Manifest, TwoLinesInFileOrder) {
  test::TempDir dir("manifest");
  for (const char* f : {"a.pgm", "a_gt.pgm", "b.pgm", "b_gt.pgm"}) write_text(dir / f, "x");
  write_text(dir / "list.tsv", "# id\timage\tmask\nzeta\ta.pgm\ta_gt.pgm\n\nalpha\tb.pgm\tb_gt.pgm\n");
  const auto entries = load_manifest(dir / "list.tsv");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].id, "zeta");
  EXPECT_EQ(entries[1].id, "alpha");
  EXPECT_EQ(entries[0].image, dir / "a.pgm");
  EXPECT_EQ(entries[1].mask, dir / "b_gt.pgm");
}

TEST(Manifest, MissingMaskNamesTheLine) {
  test::TempDir dir("manifest");
  write_text(dir / "a.pgm", "x");
  write_text(dir / "a_gt.pgm", "x");
  write_text(dir / "b.pgm", "x");
  write_text(dir / "list.tsv", "a\ta.pgm\ta_gt.pgm\nb\tb.pgm\tmissing.pgm\n");
  const std::string msg = message_of([&] { load_manifest(dir / "list.tsv"); });
  EXPECT_NE(msg.find("list.tsv:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("missing.pgm"), std::string::npos) << msg;
  EXPECT_THROW(load_manifest(dir / "list.tsv"), IoError);
}

TEST(Manifest, EmptyManifestIsValid) {
  test::TempDir dir("manifest");
  write_text(dir / "empty.tsv", "");
  EXPECT_TRUE(load_manifest(dir / "empty.tsv").empty());
}

TEST(Manifest, DuplicateIdsAndBadLinesAreRejected) {
  test::TempDir dir("manifest");
  write_text(dir / "a.pgm", "x");
  write_text(dir / "dup.tsv", "a\ta.pgm\ta.pgm\na\ta.pgm\ta.pgm\n");
  EXPECT_NE(message_of([&] { load_manifest(dir / "dup.tsv"); }).find("dup.tsv:2"), std::string::npos);
  write_text(dir / "bad.tsv", "a a.pgm a.pgm\n");
  EXPECT_THROW(load_manifest(dir / "bad.tsv"), FormatError);
  EXPECT_THROW(load_manifest(dir / "nope.tsv"), IoError);
}

}  // namespace
}  // namespace toposeg
