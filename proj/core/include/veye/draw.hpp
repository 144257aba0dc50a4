#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace veye {

using Color = std::array<std::uint8_t, 3>;

// Minimal software canvas for the annotated rig image and the plot command.
struct Canvas {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Canvas(int w, int h, Color background = {255, 255, 255});

    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    void set(int x, int y, Color c);
};

void draw_line(Canvas& canvas, int x0, int y0, int x1, int y1, Color c);
void draw_disc(Canvas& canvas, int cx, int cy, int radius, Color c);
void draw_rect(Canvas& canvas, int x0, int y0, int x1, int y1, Color c);

// 5x7 bitmap font: digits, lowercase letters and light punctuation.
// Unsupported characters render as blanks.
void draw_text(Canvas& canvas, int x, int y, const std::string& text, Color c, int scale = 1);
int text_width(const std::string& text, int scale = 1);

} // namespace veye
