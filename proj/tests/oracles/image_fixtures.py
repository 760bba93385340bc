# Writes small PNG/JPEG fixtures with PIL and prints reference pixels.
import pathlib

from PIL import Image

out = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
out.mkdir(exist_ok=True)

img = Image.new("RGB", (7, 5))
for y in range(5):
    for x in range(7):
        img.putpixel((x, y), ((37 * x) % 256, (53 * y) % 256, (11 * x * y + 5) % 256))
img.save(out / "tiny.png")
img.convert("RGBA").save(out / "tiny_rgba.png")
img.convert("L").save(out / "tiny_gray.png")

grad = Image.new("RGB", (16, 16))
for y in range(16):
    for x in range(16):
        grad.putpixel((x, y), (16 * x, 16 * y, 128))
grad.save(out / "gradient.jpg", quality=95)
grad.convert("L").save(out / "gradient_gray.jpg", quality=95)

dec = Image.open(out / "gradient.jpg").convert("RGB")
print("jpeg (3,4)", dec.getpixel((3, 4)), "(15,15)", dec.getpixel((15, 15)))
print("gray (2,2)", Image.open(out / "tiny_gray.png").getpixel((2, 2)))
