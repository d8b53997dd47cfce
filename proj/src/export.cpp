#include "mamfsd/export.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mamfsd/data.hpp"
#include "mamfsd/error.hpp"

namespace fs = std::filesystem;

namespace mamfsd {

void write_pgm(const std::string& path, int width, int height,
               const std::vector<unsigned char>& bytes) {
    check(static_cast<int64_t>(bytes.size()) == static_cast<int64_t>(width) * height,
          "pgm: byte count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write pgm: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("pgm write failed: " + path);
}

AttentionExport export_attention(const Model<float>& model, const TensorF& video, int stage,
                                 const std::string& out_dir) {
    check(stage >= 1 && stage <= 4, "export-attention: stage must be in 1..4");
    check(stage <= model.cfg.mam_count, "export-attention: stage has no MAM block");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create output directory: " + out_dir);

    Tape<float> tape;
    ModelForward<float> fwd = model.forward(tape, video, /*with_aux=*/false);
    const VarId map_id = fwd.attn[static_cast<size_t>(stage - 1)];
    check(map_id >= 0, "export-attention: no attention map recorded");
    // frame-major [T,C,Hs,Ws] normally; the depthwise ablation path records
    // the map channel-major
    const bool tc = !model.cfg.mam.depthwise;
    const TensorF& map = tape.val(map_id);
    const int C = map.dims[tc ? 1 : 0], T = map.dims[tc ? 0 : 1];
    const int Hs = map.dims[2], Ws = map.dims[3];
    const int R = model.cfg.resolution;

    AttentionExport result;
    result.frames = T;
    result.csv_path = (fs::path(out_dir) / "att_values.csv").string();
    std::ofstream csv(result.csv_path, std::ios::binary);
    if (!csv) throw DataError("cannot write attention csv");
    csv << "frame,y,x,value\n";

    std::vector<unsigned char> bytes(static_cast<size_t>(R) * R);
    for (int t = 0; t < T; ++t) {
        for (int y = 0; y < R; ++y)
            for (int x = 0; x < R; ++x) {
                const int sy = y * Hs / R, sx = x * Ws / R;  // nearest-neighbor upsample
                double acc = 0;
                for (int c = 0; c < C; ++c) {
                    const int64_t slice = tc ? (static_cast<int64_t>(t) * C + c) : (static_cast<int64_t>(c) * T + t);
                    acc += static_cast<double>(map.data[static_cast<size_t>((slice * Hs + sy) * Ws + sx)]);
                }
                const double v = acc / C;
                bytes[static_cast<size_t>(y) * R + x] = quantize_255(v);
                char line[96];
                std::snprintf(line, sizeof(line), "%d,%d,%d,%.9g\n", t, y, x, v);
                csv << line;
            }
        char name[32];
        std::snprintf(name, sizeof(name), "att_f%03d.pgm", t);
        const std::string path = (fs::path(out_dir) / name).string();
        write_pgm(path, R, R, bytes);
        result.attention_pgms.push_back(path);
    }

    // Fig-1-style inter-frame difference maps alongside
    TensorF diff = frame_difference_map(video);
    const int Hd = diff.dims[1], Wd = diff.dims[2];
    for (int t = 0; t + 1 < video.dims[0]; ++t) {
        for (int y = 0; y < Hd; ++y)
            for (int x = 0; x < Wd; ++x)
                bytes[static_cast<size_t>(y) * Wd + x] =
                    quantize_255(diff.data[static_cast<size_t>((t * Hd + y) * Wd + x)]);
        char name[32];
        std::snprintf(name, sizeof(name), "diff_f%03d.pgm", t);
        const std::string path = (fs::path(out_dir) / name).string();
        write_pgm(path, Wd, Hd, std::vector<unsigned char>(bytes.begin(),
                                                           bytes.begin() + static_cast<int64_t>(Hd) * Wd));
        result.diff_pgms.push_back(path);
    }
    return result;
}

}  // namespace mamfsd
