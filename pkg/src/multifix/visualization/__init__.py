from multifix.visualization.visuals import Visuals, heatmap_image, overlay_image, save_png
